# -*- coding: utf-8 -*-

"""
================================================================================
🕵️ services/stealth.py - トリガゲートの信号確率・遷移確率
================================================================================

入力は空間的にも時間的にも独立と仮定する（モデル上の前提）。
解析値は Fraction で厳密に計算し、モンテカルロは numpy の乱数で検証する。
"""

import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from models.errors import ConfigError
from models.gates import GateKind, GateNode, ProbReport
from utils import logger

MAX_EXHAUSTIVE_INPUTS = 20
MC_BATCH_ROWS = 1 << 16


# ================================================================================
# 🧮 解析値
# ================================================================================

def signal_prob_exact(node):
    """p(出力 = 1) を Fraction で（入力の独立性を仮定）"""
    if node.kind is GateKind.INPUT:
        return Fraction(node.input_prob)
    probs = [signal_prob_exact(child) for child in node.children]
    if node.kind is GateKind.AND:
        return math.prod(probs)
    if node.kind is GateKind.NAND:
        return 1 - math.prod(probs)
    if node.kind is GateKind.NOR:
        return math.prod(1 - p for p in probs)
    if node.kind is GateKind.OR:
        return 1 - math.prod(1 - p for p in probs)
    # XOR: 奇数個が 1 になる確率を 1 入力ずつ畳み込む
    odd = Fraction(0)
    for p in probs:
        odd = odd * (1 - p) + (1 - odd) * p
    return odd


def signal_prob(node):
    return float(signal_prob_exact(node))


def transition_prob(p):
    """時間的独立のもとでの遷移確率 2p(1-p)"""
    if not 0 <= p <= 1:
        raise ConfigError(f"probability out of range: {p}")
    return 2 * p * (1 - p)


def comparator_activation_prob(width):
    """c ビット完全一致比較器の発火確率 2^-c（厳密な 2 進有理数）"""
    if not 1 <= width <= 128:
        raise ConfigError(f"comparator width must be in 1..128, got {width}")
    return Fraction(1, 1 << width)


def exhaustive_signal_prob(node):
    """真理値表を全列挙して p(出力 = 1) を求める（独立入力の重み付き）"""
    leaves = node.leaves()
    n = len(leaves)
    if n > MAX_EXHAUSTIVE_INPUTS:
        raise ConfigError(f"{n} inputs is too many for exhaustive enumeration")
    probs = [Fraction(leaf.input_prob) for leaf in leaves]
    total = Fraction(0)
    for assignment in range(1 << n):
        values = [bool(assignment >> (n - 1 - i) & 1) for i in range(n)]
        if not node.evaluate(iter(values)):
            continue
        weight = Fraction(1)
        for value, p in zip(values, probs):
            weight *= p if value else 1 - p
        total += weight
    return total


# ================================================================================
# 🌲 名前付きパターン
# ================================================================================

def comparator_tree(width, p=0.5):
    """c 本の一致ビットを受ける平衡 AND 木"""
    if not 1 <= width <= 128:
        raise ConfigError(f"comparator width must be in 1..128, got {width}")
    level = [GateNode.input(p) for _ in range(width)]
    if width == 1:
        return GateNode.gate(GateKind.AND, level[0])
    while len(level) > 1:
        paired = [GateNode.gate(GateKind.AND, *level[i:i + 2]) if i + 1 < len(level) else level[i]
                  for i in range(0, len(level), 2)]
        level = paired
    return level[0]


def build_pattern(name, p=0.5):
    """'and-nand' / 'nand-nor' / 'comparator:<c>' -> GateNode"""
    name = name.strip().lower()
    if name == 'and-nand':
        pair = lambda: GateNode.gate(GateKind.AND, GateNode.input(p), GateNode.input(p))
        return GateNode.gate(GateKind.NAND, pair(), pair())
    if name == 'nand-nor':
        pair = lambda: GateNode.gate(GateKind.NAND, GateNode.input(p), GateNode.input(p))
        return GateNode.gate(GateKind.NOR, pair(), pair())
    if name.startswith('comparator:'):
        try:
            width = int(name.split(':', 1)[1])
        except ValueError:
            raise ConfigError(f"Bad comparator width in pattern '{name}'")
        return comparator_tree(width, p)
    raise ConfigError(f"Unknown pattern: {name}")


# ================================================================================
# 🎲 モンテカルロ
# ================================================================================

def _evaluate_columns(node, columns, cursor):
    if node.kind is GateKind.INPUT:
        col = columns[:, cursor[0]]
        cursor[0] += 1
        return col
    bits = [_evaluate_columns(child, columns, cursor) for child in node.children]
    if node.kind is GateKind.AND:
        return np.logical_and.reduce(bits)
    if node.kind is GateKind.NAND:
        return ~np.logical_and.reduce(bits)
    if node.kind is GateKind.OR:
        return np.logical_or.reduce(bits)
    if node.kind is GateKind.NOR:
        return ~np.logical_or.reduce(bits)
    return np.logical_xor.reduce(bits)


def _run_chunk(node, probs, rows, seed_seq):
    """1 チャンク分をサンプリング -> (1 の個数, チャンク内の遷移数, 先頭値, 末尾値)"""
    rng = np.random.default_rng(seed_seq)
    ones = 0
    toggles = 0
    first = last = None
    remaining = rows
    while remaining > 0:
        batch = min(remaining, MC_BATCH_ROWS)
        columns = rng.random((batch, len(probs))) < probs
        out = _evaluate_columns(node, columns, [0])
        ones += int(np.count_nonzero(out))
        toggles += int(np.count_nonzero(out[1:] != out[:-1]))
        if last is not None and bool(out[0]) != last:
            toggles += 1
        if first is None:
            first = bool(out[0])
        last = bool(out[-1])
        remaining -= batch
    return ones, toggles, first, last


def monte_carlo(node, samples, seed=0, pattern='custom', chunks=1, max_workers=1):
    """サイクルごとに独立な入力を引いて出力の 1 の頻度と遷移頻度を推定

    chunks > 1 では SeedSequence.spawn で子シードを作り、結果はチャンク順に合成する。
    """
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples}")
    chunks = max(1, min(int(chunks), samples))
    probs = np.array([leaf.input_prob for leaf in node.leaves()])
    children = np.random.SeedSequence(seed).spawn(chunks)
    sizes = [samples // chunks + (1 if i < samples % chunks else 0) for i in range(chunks)]

    if max_workers > 1 and chunks > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda args: _run_chunk(node, probs, *args), zip(sizes, children)))
    else:
        results = [_run_chunk(node, probs, rows, child) for rows, child in zip(sizes, children)]

    ones = 0
    toggles = 0
    previous = None
    for chunk_ones, chunk_toggles, first, last in results:
        ones += chunk_ones
        toggles += chunk_toggles
        if previous is not None and first != previous:
            toggles += 1
        previous = last

    exact = signal_prob_exact(node)
    p = float(exact)
    report = ProbReport(
        pattern=pattern,
        signal_prob=p,
        transition_prob=transition_prob(p),
        mc_estimate=ones / samples,
        mc_transition=toggles / (samples - 1) if samples > 1 else 0.0,
        mc_samples=samples,
        seed=seed,
        sigma=math.sqrt(p * (1 - p) / samples),
        exact=str(exact),
        log2_prob=math.log2(exact) if exact else None,
    )
    logger.debug(f"🎲 {pattern}: analytic={p:.6g} mc={report.mc_estimate:.6g} ({samples} samples)")
    return report


def analyze_pattern(pattern, samples=1_000_000, seed=0, chunks=1):
    """名前付きパターンの ProbReport（comparator は厳密値を 2 進有理数で持つ）"""
    node = build_pattern(pattern)
    return monte_carlo(node, samples, seed, pattern=pattern, chunks=chunks)
