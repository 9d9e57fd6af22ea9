# -*- coding: utf-8 -*-

"""
================================================================================
🖥 models/machine.py - アーキテクチャ状態
================================================================================

CPU のアーキテクチャ状態（PC、GPR、特権モード、CSR、サイクル）と
物理メモリを保持する。命令の実行ロジックは services/cpu.py 側。
"""

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum

from models.errors import Trap
from utils.constants import (
    MASK64, CAUSE_NAMES, CAUSE_ILLEGAL_INSTRUCTION, CSR_ADDRESSES,
    MSTATUS_WRITABLE, MSTATUS_MPP, MSTATUS_MPP_SHIFT, SSTATUS_MASK,
    MIE_WRITABLE, MIP_WRITABLE, MIP_MTIP, MIP_SSIP, MIDELEG_WRITABLE, MEDELEG_WRITABLE,
    SATP_MODE_SHIFT, SATP_MODE_BARE, SATP_MODE_SV39, SATP_PPN_MASK, MISA_VALUE,
)


class PrivilegeMode(IntEnum):
    """特権モード（値は RISC-V のエンコーディング）"""
    User = 0
    Supervisor = 1
    Machine = 3


MODE_ORDER = (PrivilegeMode.User, PrivilegeMode.Supervisor, PrivilegeMode.Machine)


@dataclass(frozen=True)
class TrapCause:
    """トラップ要因"""
    is_interrupt: bool
    code: int

    @property
    def cause_value(self):
        """xcause に書き込む値"""
        return ((1 << 63) | self.code) if self.is_interrupt else self.code

    @property
    def name(self):
        if self.is_interrupt:
            return f'interrupt_{self.code}'
        return CAUSE_NAMES.get(self.code, f'exception_{self.code}')

    def to_dict(self):
        return {'is_interrupt': self.is_interrupt, 'code': self.code, 'name': self.name}


@dataclass(frozen=True)
class FaultRecord:
    """同期例外（ページフォルト / アクセスフォルト）の記録"""
    cycle: int
    cause: int
    tval: int
    pc: int
    mode: str

    def to_dict(self):
        return {'cycle': self.cycle, 'cause': self.cause, 'tval': f'0x{self.tval:x}',
                'pc': f'0x{self.pc:x}', 'mode': self.mode}


# ================================================================================
# 🗂 CSR ファイル
# ================================================================================

class CsrFile:
    """最小限の特権仕様 CSR セット

    未実装ビットは常に 0 として読める。satp の MODE は Bare(0) / Sv39(8) のみ受け付け、
    それ以外の値の書き込みは無視する。
    """

    REGISTERS = ('mstatus', 'mtvec', 'mepc', 'mcause', 'mtval', 'medeleg', 'mideleg',
                 'mie', 'mip', 'satp', 'stvec', 'sepc', 'scause', 'stval',
                 'sscratch', 'mscratch', 'mtimecmp', 'mtime')

    def __init__(self):
        for name in self.REGISTERS:
            setattr(self, name, 0)
        # mtimecmp は最大値で起動（タイマー未設定）
        self.mtimecmp = MASK64

    # ------------------------------------------------------------------
    # 割り込み保留ビット
    # ------------------------------------------------------------------
    def pending(self):
        """mip の実効値（MTIP はハードウェアが mtime から生成）"""
        value = self.mip & MIP_WRITABLE
        if self.mtime >= self.mtimecmp:
            value |= MIP_MTIP
        return value

    # ------------------------------------------------------------------
    # 読み書き
    # ------------------------------------------------------------------
    def read(self, addr):
        """CSR を読む。未知のアドレスは KeyError"""
        if addr == 0x100:
            return self.mstatus & SSTATUS_MASK
        if addr == 0x104:
            return self.mie & self.mideleg
        if addr == 0x144:
            return self.pending() & self.mideleg
        if addr == 0x344:
            return self.pending()
        if addr == 0x301:
            return MISA_VALUE
        if addr == 0xF14:
            return 0
        name = _CSR_FIELDS[addr]
        return getattr(self, name)

    def write(self, addr, value):
        """CSR に書く（WARL マスク適用）。未知のアドレスは KeyError"""
        value &= MASK64
        if addr == 0x300:
            new = value & MSTATUS_WRITABLE
            if (new & MSTATUS_MPP) >> MSTATUS_MPP_SHIFT == 2:
                new = (new & ~MSTATUS_MPP) | (self.mstatus & MSTATUS_MPP)
            self.mstatus = new
        elif addr == 0x100:
            self.mstatus = (self.mstatus & ~SSTATUS_MASK) | (value & SSTATUS_MASK)
        elif addr == 0x304:
            self.mie = value & MIE_WRITABLE
        elif addr == 0x104:
            self.mie = (self.mie & ~self.mideleg) | (value & self.mideleg)
        elif addr == 0x344:
            self.mip = value & MIP_WRITABLE
        elif addr == 0x144:
            writable = MIP_SSIP & self.mideleg
            self.mip = (self.mip & ~writable) | (value & writable)
        elif addr == 0x302:
            self.medeleg = value & MEDELEG_WRITABLE
        elif addr == 0x303:
            self.mideleg = value & MIDELEG_WRITABLE
        elif addr in (0x305, 0x105, 0x341, 0x141):
            setattr(self, _CSR_FIELDS[addr], value & ~3)
        elif addr == 0x180:
            mode = value >> SATP_MODE_SHIFT
            if mode in (SATP_MODE_BARE, SATP_MODE_SV39):
                self.satp = (mode << SATP_MODE_SHIFT) | (value & SATP_PPN_MASK)
        elif addr == 0x301:
            pass
        else:
            setattr(self, _CSR_FIELDS[addr], value)

    @property
    def satp_mode(self):
        return self.satp >> SATP_MODE_SHIFT

    @property
    def satp_ppn(self):
        return self.satp & SATP_PPN_MASK

    def snapshot(self):
        """ダイジェスト用の全 CSR 値"""
        return {name: getattr(self, name) for name in self.REGISTERS}


_CSR_FIELDS = {
    CSR_ADDRESSES[name]: name
    for name in ('mstatus', 'mtvec', 'mepc', 'mcause', 'mtval', 'medeleg', 'mideleg',
                 'mie', 'satp', 'stvec', 'sepc', 'scause', 'stval', 'sscratch', 'mscratch')
}


def check_csr_access(addr, mode, writing):
    """CSR アクセス権のチェック（違反は不正命令トラップ）"""
    if mode < ((addr >> 8) & 3):
        raise Trap(CAUSE_ILLEGAL_INSTRUCTION)
    if writing and (addr >> 10) & 3 == 3:
        raise Trap(CAUSE_ILLEGAL_INSTRUCTION)


# ================================================================================
# 💾 物理メモリ
# ================================================================================

class PhysicalMemory:
    """連続した単一の RAM 領域（リトルエンディアン、非整列アクセス可）"""

    def __init__(self, base, size):
        self.base = base
        self.size = size
        self.data = bytearray(size)

    def contains(self, addr, size=1):
        return self.base <= addr and addr + size <= self.base + self.size

    def read(self, addr, size):
        off = addr - self.base
        return int.from_bytes(self.data[off:off + size], 'little')

    def write(self, addr, size, value):
        off = addr - self.base
        self.data[off:off + size] = (value & ((1 << (8 * size)) - 1)).to_bytes(size, 'little')

    def read_bytes(self, addr, length):
        off = addr - self.base
        return bytes(self.data[off:off + length])

    def load(self, addr, payload):
        """セグメントを書き込む"""
        if not self.contains(addr, len(payload)):
            raise ValueError(f"Segment 0x{addr:x}+{len(payload)} outside RAM")
        off = addr - self.base
        self.data[off:off + len(payload)] = payload

    def digest(self):
        return hashlib.sha256(self.data).hexdigest()


# ================================================================================
# 🖥 マシン状態
# ================================================================================

@dataclass
class MachineState:
    """アーキテクチャ状態 + 物理メモリ"""
    mem: PhysicalMemory
    pc: int = 0
    gpr: list = field(default_factory=lambda: [0] * 32)
    mode: PrivilegeMode = PrivilegeMode.Machine
    csr: CsrFile = field(default_factory=CsrFile)
    cycles: int = 0
    instret: int = 0
    mode_entries: dict = field(default_factory=lambda: {m: 0 for m in MODE_ORDER})
    mode_cycles: dict = field(default_factory=lambda: {m: 0 for m in MODE_ORDER})
    halted: bool = False
    exit_code: int = None
    faults: list = field(default_factory=list)
    console: bytearray = field(default_factory=bytearray)

    def advance(self, n, trojan=None):
        """n サイクル進める（mtime、モード別占有、トロイの木馬の tick を含む）"""
        if n <= 0:
            return
        self.cycles += n
        self.csr.mtime = (self.csr.mtime + n) & MASK64
        self.mode_cycles[self.mode] += n
        if trojan is not None:
            trojan.on_cycles(self, n)

    def read_csr(self, addr):
        """カウンタ系 CSR を含めて読む"""
        if addr in (0xC00, 0xB00):
            return self.cycles & MASK64
        if addr in (0xC02, 0xB02):
            return self.instret & MASK64
        if addr == 0xC01:
            return self.csr.mtime
        return self.csr.read(addr)

    def write_csr(self, addr, value):
        if addr in (0xB00, 0xB02):
            return
        self.csr.write(addr, value)

    def digest(self):
        """アーキテクチャ状態 + メモリの SHA-256"""
        h = hashlib.sha256()
        h.update(self.pc.to_bytes(8, 'little'))
        for value in self.gpr:
            h.update((value & MASK64).to_bytes(8, 'little'))
        h.update(bytes([int(self.mode)]))
        for name, value in self.csr.snapshot().items():
            h.update(name.encode())
            h.update((value & MASK64).to_bytes(8, 'little'))
        h.update(self.cycles.to_bytes(8, 'little'))
        h.update(self.mem.data)
        return h.hexdigest()
