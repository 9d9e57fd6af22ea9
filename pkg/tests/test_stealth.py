import random
from fractions import Fraction

import pytest

from models.errors import ConfigError
from models.gates import GateKind, GateNode
from models.trojan import TrojanConfig, TrojanKind
from services.stealth import (
    signal_prob, signal_prob_exact, transition_prob, comparator_activation_prob,
    exhaustive_signal_prob, comparator_tree, build_pattern, monte_carlo, analyze_pattern,
)
from services.trojan import comparator_masks, sample_irt1

GATE_KINDS = [GateKind.AND, GateKind.NAND, GateKind.OR, GateKind.NOR, GateKind.XOR]
LEAF_PROBS = [0.125, 0.25, 0.5, 0.75]


def random_tree(rng, budget):
    """葉の数が budget 以下のランダムなゲート木"""
    if budget <= 1 or rng.random() < 0.25:
        return GateNode.input(rng.choice(LEAF_PROBS))
    fan_in = rng.randint(1, min(3, budget))
    share = budget // fan_in
    return GateNode.gate(rng.choice(GATE_KINDS), *[random_tree(rng, share) for _ in range(fan_in)])


# ================================================================================
# 解析値
# ================================================================================

def test_reference_patterns():
    assert signal_prob(build_pattern('nand-nor')) == 0.0625
    assert signal_prob(build_pattern('and-nand')) == 0.9375
    assert transition_prob(0.0625) == 0.1171875
    assert signal_prob_exact(build_pattern('comparator:8')) == Fraction(1, 256)


def test_comparator_probabilities():
    assert comparator_activation_prob(8) == Fraction(1, 256)
    assert comparator_activation_prob(128) == Fraction(1, 1 << 128)
    assert signal_prob_exact(comparator_tree(128)) == Fraction(1, 1 << 128)
    assert len(comparator_tree(37).leaves()) == 37
    with pytest.raises(ConfigError):
        comparator_activation_prob(0)
    with pytest.raises(ConfigError):
        comparator_tree(129)


def test_transition_prob_bounds():
    assert transition_prob(0) == 0
    assert transition_prob(0.5) == 0.5
    with pytest.raises(ConfigError):
        transition_prob(1.5)


def test_exhaustive_matches_analytic():
    rng = random.Random(11)
    for _ in range(40):
        tree = random_tree(rng, 12)
        assert exhaustive_signal_prob(tree) == signal_prob_exact(tree)


def test_exhaustive_input_limit():
    with pytest.raises(ConfigError):
        exhaustive_signal_prob(comparator_tree(21))


@pytest.mark.parametrize('name', ['nor-nand', 'comparator:x', ''])
def test_unknown_patterns(name):
    with pytest.raises(ConfigError):
        build_pattern(name)


def test_gate_validation():
    with pytest.raises(ConfigError):
        GateNode.input(1.5)
    with pytest.raises(ConfigError):
        GateNode.gate(GateKind.AND)
    with pytest.raises(ConfigError):
        GateNode(GateKind.INPUT, (GateNode.input(),))


# ================================================================================
# モンテカルロ
# ================================================================================

@pytest.mark.parametrize('pattern', ['nand-nor', 'and-nand', 'comparator:8'])
def test_monte_carlo_agrees(pattern):
    report = analyze_pattern(pattern, samples=1_000_000, seed=3)
    assert abs(report.mc_estimate - report.signal_prob) <= 3 * report.sigma
    assert report.within_3_sigma
    assert report.mc_transition == pytest.approx(report.transition_prob, abs=0.005)
    assert report.to_dict()['within_3_sigma'] == report.within_3_sigma


def test_monte_carlo_is_seeded():
    node = build_pattern('nand-nor')
    a = monte_carlo(node, 50_000, seed=7)
    b = monte_carlo(node, 50_000, seed=7)
    c = monte_carlo(node, 50_000, seed=8)
    assert a == b
    assert a.mc_estimate != c.mc_estimate


def test_chunked_sampling_is_worker_independent():
    node = build_pattern('and-nand')
    serial = monte_carlo(node, 100_001, seed=2, chunks=4, max_workers=1)
    threaded = monte_carlo(node, 100_001, seed=2, chunks=4, max_workers=4)
    assert serial == threaded


def test_wide_comparator_report():
    report = monte_carlo(comparator_tree(128), 1000, pattern='comparator:128')
    assert report.log2_prob == -128
    assert report.mc_estimate == 0
    assert report.exact == f'1/{1 << 128}'


def test_monte_carlo_rejects_empty_run():
    with pytest.raises(ConfigError):
        monte_carlo(build_pattern('nand-nor'), 0)


# ================================================================================
# 偶発的な活性化
# ================================================================================

def test_irt1_comparator_fires_once_per_low_byte_space():
    cfg = TrojanConfig(kind=TrojanKind.IRT1, comparator_width=8)
    masks = comparator_masks(cfg)
    rng = random.Random(5)
    hi_reg, lo_reg = cfg.host_regs
    fired = total = 0
    for _ in range(16):
        # 比較対象外の上位ビットは何でもよい
        gpr = [rng.getrandbits(64) for _ in range(32)]
        upper = gpr[lo_reg] & ~0xFF
        for low in range(256):
            gpr[lo_reg] = upper | low
            fired += sample_irt1(gpr, cfg, masks)
            total += 1
    assert Fraction(fired, total) == comparator_activation_prob(8) == Fraction(1, 1 << 8)


def test_comparator_16_monte_carlo_matches_bound():
    report = analyze_pattern('comparator:16', samples=1_000_000, seed=4)
    assert report.signal_prob == 2 ** -16
    assert abs(report.mc_estimate - 2 ** -16) <= 3 * report.sigma
