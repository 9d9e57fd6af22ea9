from dataclasses import dataclass, field, asdict
from enum import Enum

from models.errors import ConfigError
from utils.constants import MASK64

# ================================================================================
# 🐴 トロイの木馬の設定と状態
# ================================================================================


class TrojanKind(Enum):
    Disabled = 'Disabled'
    IRT1 = 'IRT1'
    IRT2 = 'IRT2'


class FsmState(Enum):
    S0 = 'S0'
    S1 = 'S1'


DEFAULT_ACTIVATION = (0x4952_545F_4143_5449, 0x5641_5445_5F31_3238)
DEFAULT_DEACTIVATION = (0x4952_545F_4445_4143, 0x5449_5641_5445_5F30)


@dataclass
class TrojanConfig:
    """トリガ回路の設定

    activation / deactivation は (hi, lo) の 64 ビット対で 128 ビットの値を表す。
    comparator_width は下位何ビットを比較するか（128 で完全一致）。
    """
    kind: TrojanKind = TrojanKind.Disabled
    host_regs: tuple = (20, 21)
    activation: tuple = DEFAULT_ACTIVATION
    deactivation: tuple = DEFAULT_DEACTIVATION
    latency: int = 8
    comparator_width: int = 128

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                self.kind = TrojanKind(self.kind)
            except ValueError:
                raise ConfigError(f"Unknown trojan kind: {self.kind}")
        self.host_regs = tuple(int(r) for r in self.host_regs)
        self.activation = tuple(int(v) & MASK64 for v in self.activation)
        self.deactivation = tuple(int(v) & MASK64 for v in self.deactivation)
        self.validate()

    def validate(self):
        if len(self.host_regs) != 2 or len(self.activation) != 2 or len(self.deactivation) != 2:
            raise ConfigError("host_regs, activation and deactivation must be pairs")
        a, b = self.host_regs
        if a == b or 0 in (a, b) or not all(0 < r < 32 for r in (a, b)):
            raise ConfigError(f"host_regs must be two distinct nonzero GPRs, got {self.host_regs}")
        if self.activation == self.deactivation:
            raise ConfigError("activation and deactivation values must differ")
        if self.latency < 1:
            raise ConfigError(f"latency must be >= 1, got {self.latency}")
        if not 1 <= self.comparator_width <= 128:
            raise ConfigError(f"comparator_width must be in 1..128, got {self.comparator_width}")

    @property
    def enabled(self):
        return self.kind is not TrojanKind.Disabled

    def to_dict(self):
        return {
            'kind': self.kind.value,
            'host_regs': list(self.host_regs),
            'activation': [f'0x{v:016x}' for v in self.activation],
            'deactivation': [f'0x{v:016x}' for v in self.deactivation],
            'latency': self.latency,
            'comparator_width': self.comparator_width,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        for key in ('activation', 'deactivation'):
            if key in data:
                data[key] = tuple(int(v, 0) if isinstance(v, str) else int(v) for v in data[key])
        if 'host_regs' in data:
            data['host_regs'] = tuple(data['host_regs'])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown trojan keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class PayloadStats:
    """ペイロード関連のカウンタ"""
    suppressed_faults: int = 0
    raw_on_cycles: int = 0
    delivered_on_cycles: int = 0
    activations: int = 0
    deactivations: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PayloadEvent:
    """U モードのストアで権限チェックにペイロードが関与した記録"""
    cycle: int
    va: int
    tlb_hit: bool
    walk_cycles: int
    walk_start_cycle: int
    delivered: bool
    overridden: bool
    cycles_since_raw_rise: int
    delivered_rise_cycle: int = None

    @property
    def matured_walk_cycle(self):
        """delivered が立ったのがこのストアのウォーク何サイクル目か（ウォーク外なら None）"""
        if self.tlb_hit or self.delivered_rise_cycle is None:
            return None
        offset = self.delivered_rise_cycle - self.walk_start_cycle
        if 1 <= offset <= self.walk_cycles:
            return offset
        return None

    def to_dict(self):
        return {
            'cycle': self.cycle, 'va': f'0x{self.va:x}', 'tlb_hit': self.tlb_hit,
            'walk_cycles': self.walk_cycles, 'delivered': self.delivered,
            'overridden': self.overridden, 'cycles_since_raw_rise': self.cycles_since_raw_rise,
            'matured_walk_cycle': self.matured_walk_cycle,
        }


@dataclass
class TriggerState:
    """トリガの内部状態（FSM + 遅延線）"""
    latency: int
    fsm: FsmState = FsmState.S0
    delay_line: list = None
    head: int = 0
    raw: bool = False
    delivered: bool = False
    stats: PayloadStats = field(default_factory=PayloadStats)

    def __post_init__(self):
        if self.delay_line is None:
            self.delay_line = [False] * self.latency
