from dataclasses import dataclass, field

from config import get_config
from models.errors import BuildError
from models.trojan import TrojanConfig
from utils.constants import SCENARIOS, REFERENCE_KBYTES, MIN_QUANTUM, STORE_LOOP_CYCLES, ATTACK_SLICES

# ================================================================================
# 🧩 シナリオのパラメータと期待結果
# ================================================================================


def auto_quantum(store_count):
    """ストア数から、攻撃中に必ずタイマー割り込みが入るタイムスライスを決める

    U モードの連続実行は quantum 未満で必ず切られるので、
    ストアループの所要サイクルが quantum を超えればプリエンプトが起きる。
    """
    ceiling = get_config().QUANTUM
    return max(MIN_QUANTUM, min(ceiling, store_count * STORE_LOOP_CYCLES // ATTACK_SLICES))


@dataclass
class ScenarioParams:
    """build_scenario の入力

    kbytes は保護領域に書き込む量（KiB）。0.5 / 1 / 4 / 16 / 32 以外も受け付けるが
    is_reference_row が False になる。
    quantum を省略すると、ストアループが ATTACK_SLICES 個以上のスライスに
    またがる長さ（MIN_QUANTUM 以上、Config.QUANTUM 以下）に決める。
    """
    scenario: str = 'kernel_cs'
    kbytes: float = 1
    quantum: int = None
    seed: int = 1
    trojan: TrojanConfig = field(default_factory=TrojanConfig)
    sweep_bits: list = field(default_factory=lambda: list(range(8, 17)))
    sweep_variant: str = 'reg'

    def __post_init__(self):
        self.scenario = self.scenario.replace('-', '_')
        if self.scenario not in SCENARIOS:
            raise BuildError(f"Unknown scenario: {self.scenario}")
        if isinstance(self.trojan, dict):
            self.trojan = TrojanConfig.from_dict(self.trojan)
        if self.kbytes <= 0:
            raise BuildError(f"kbytes must be positive, got {self.kbytes}")
        if self.fill_bytes % 8:
            raise BuildError(f"kbytes={self.kbytes} is not a whole number of doublewords")
        if self.sweep_variant not in ('reg', 'mem'):
            raise BuildError(f"Unknown sweep variant: {self.sweep_variant}")
        if self.quantum is None:
            self.quantum = auto_quantum(self.store_count)

    @property
    def fill_bytes(self):
        return int(round(self.kbytes * 1024))

    @property
    def store_count(self):
        return self.fill_bytes // 8

    @property
    def is_reference_row(self):
        return self.kbytes in REFERENCE_KBYTES


@dataclass(frozen=True)
class ExpectedOutcome:
    """シナリオの期待結果と、保護領域に書かれるべきパターン"""
    verdict: str
    region_pa: int
    region_va: int
    length: int
    fill: int

    @property
    def pattern(self):
        return (self.region_pa, self.region_pa + self.length, self.fill)

    def expected_bytes(self):
        return self.fill.to_bytes(8, 'little') * (self.length // 8)

    def region_matches(self, mem):
        """保護領域がパターンと完全一致するか"""
        return mem.read_bytes(self.region_pa, self.length) == self.expected_bytes()

    def to_dict(self):
        return {
            'verdict': self.verdict,
            'region_pa': f'0x{self.region_pa:x}',
            'region_va': f'0x{self.region_va:x}',
            'length': self.length,
            'fill': f'0x{self.fill:016x}',
        }
