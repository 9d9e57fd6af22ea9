from dataclasses import dataclass, field
from enum import Enum

from utils.constants import (
    PTE_V, PTE_R, PTE_W, PTE_X, PTE_U, PTE_G, PTE_A, PTE_D, PPN_MASK,
    CAUSE_FETCH_PAGE_FAULT, CAUSE_LOAD_PAGE_FAULT, CAUSE_STORE_PAGE_FAULT,
    CAUSE_FETCH_ACCESS, CAUSE_LOAD_ACCESS, CAUSE_STORE_ACCESS,
)

# ================================================================================
# 🧭 アドレス変換の型
# ================================================================================


class AccessType(Enum):
    Fetch = 'fetch'
    Load = 'load'
    Store = 'store'

    @property
    def page_fault(self):
        return _PAGE_FAULTS[self]

    @property
    def access_fault(self):
        return _ACCESS_FAULTS[self]


_PAGE_FAULTS = {
    AccessType.Fetch: CAUSE_FETCH_PAGE_FAULT,
    AccessType.Load: CAUSE_LOAD_PAGE_FAULT,
    AccessType.Store: CAUSE_STORE_PAGE_FAULT,
}
_ACCESS_FAULTS = {
    AccessType.Fetch: CAUSE_FETCH_ACCESS,
    AccessType.Load: CAUSE_LOAD_ACCESS,
    AccessType.Store: CAUSE_STORE_ACCESS,
}


@dataclass(frozen=True)
class Pte:
    """Sv39 のページテーブルエントリ"""
    raw: int

    v = property(lambda self: bool(self.raw & PTE_V))
    r = property(lambda self: bool(self.raw & PTE_R))
    w = property(lambda self: bool(self.raw & PTE_W))
    x = property(lambda self: bool(self.raw & PTE_X))
    u = property(lambda self: bool(self.raw & PTE_U))
    g = property(lambda self: bool(self.raw & PTE_G))
    a = property(lambda self: bool(self.raw & PTE_A))
    d = property(lambda self: bool(self.raw & PTE_D))

    @property
    def ppn(self):
        return (self.raw >> 10) & PPN_MASK

    @property
    def is_leaf(self):
        return self.r or self.x

    @property
    def reserved_bits(self):
        """bit 63..54（本実装では常に 0 でなければならない）"""
        return self.raw >> 54

    @classmethod
    def make(cls, ppn, flags):
        return cls(((ppn & PPN_MASK) << 10) | (flags & 0xFF))

    def flags_str(self):
        return ''.join(c if bit else '-' for c, bit in
                       zip('DAGUXWRV', (self.d, self.a, self.g, self.u, self.x, self.w, self.r, self.v)))


@dataclass(frozen=True)
class TranslationRequest:
    va: int
    access: AccessType
    mode: int
    sum: bool = False
    mxr: bool = False


@dataclass(frozen=True)
class WalkStep:
    """ページウォーク中の PTE 読み出し 1 回分"""
    level: int
    address: int
    value: int

    def to_line(self):
        return f"level={self.level} addr=0x{self.address:x} pte=0x{self.value:016x}"


@dataclass
class TranslationResult:
    """変換結果。pa が None なら fault に要因が入る"""
    pa: int = None
    fault: object = None
    cycles: int = 0
    walk: tuple = ()
    tlb_hit: bool = False
    u_bit_overridden: bool = False
    level: int = None
    walk_start_cycle: int = None
    check_cycle: int = None

    @property
    def ok(self):
        return self.fault is None

    @property
    def levels_visited(self):
        return len(self.walk)


@dataclass
class TlbEntry:
    tag: int
    level: int
    pte: Pte


@dataclass
class WalkOutcome:
    """walk() の戻り値（fault が None なら pte はリーフ）"""
    pte: Pte
    level: int
    trace: list = field(default_factory=list)
    fault: int = None
