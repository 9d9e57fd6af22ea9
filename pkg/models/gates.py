from dataclasses import dataclass
from enum import Enum

from models.errors import ConfigError

# ================================================================================
# 🔣 トリガ回路のゲート木
# ================================================================================


class GateKind(Enum):
    AND = 'AND'
    NAND = 'NAND'
    NOR = 'NOR'
    OR = 'OR'
    XOR = 'XOR'
    INPUT = 'INPUT'


@dataclass(frozen=True)
class GateNode:
    """ゲート木のノード（INPUT は input_prob を持つ葉）"""
    kind: GateKind
    children: tuple = ()
    input_prob: float = 0.5

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, 'kind', GateKind(self.kind.upper()))
        object.__setattr__(self, 'children', tuple(self.children))
        if self.kind is GateKind.INPUT:
            if self.children:
                raise ConfigError("INPUT nodes cannot have children")
            if not 0 <= self.input_prob <= 1:
                raise ConfigError(f"input probability out of range: {self.input_prob}")
        elif not self.children:
            raise ConfigError(f"{self.kind.value} gate needs at least one input")

    @classmethod
    def input(cls, p=0.5):
        return cls(GateKind.INPUT, (), p)

    @classmethod
    def gate(cls, kind, *children):
        return cls(kind, children)

    def leaves(self):
        """INPUT ノードを左から順に列挙"""
        if self.kind is GateKind.INPUT:
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def evaluate(self, values):
        """入力値のイテレータを左から消費して論理値を計算"""
        if self.kind is GateKind.INPUT:
            return next(values)
        bits = [child.evaluate(values) for child in self.children]
        if self.kind is GateKind.AND:
            return all(bits)
        if self.kind is GateKind.NAND:
            return not all(bits)
        if self.kind is GateKind.OR:
            return any(bits)
        if self.kind is GateKind.NOR:
            return not any(bits)
        return sum(bits) % 2 == 1


@dataclass(frozen=True)
class ProbReport:
    """信号確率・遷移確率の解析値とモンテカルロ推定値"""
    pattern: str
    signal_prob: float
    transition_prob: float
    mc_estimate: float
    mc_transition: float
    mc_samples: int
    seed: int
    sigma: float
    exact: str = None
    log2_prob: float = None

    @property
    def within_3_sigma(self):
        return abs(self.signal_prob - self.mc_estimate) <= 3 * self.sigma

    def to_dict(self):
        return {
            'pattern': self.pattern,
            'signal_prob': self.signal_prob,
            'exact': self.exact,
            'log2_prob': self.log2_prob,
            'transition_prob': self.transition_prob,
            'mc_estimate': self.mc_estimate,
            'mc_transition': self.mc_transition,
            'mc_samples': self.mc_samples,
            'seed': self.seed,
            'sigma': self.sigma,
            'within_3_sigma': self.within_3_sigma,
        }
