# -*- coding: utf-8 -*-

"""
================================================================================
🐴 services/trojan.py - 割り込み耐性トリガとペイロード
================================================================================

IRT-1: 2 本の GPR を監視する組み合わせ比較器。コンテキストスイッチの
       レジスタ復元で自動的に再アームされる。
IRT-2: 加算器のオペランドを監視する 2 状態 FSM。アクティベーション値で S1 に
       入り、ディアクティベーション値を見るまで S1 を保持する。
どちらのトリガも L サイクルの遅延線（マルチサイクルパス）を通ってペイロード
（MMU の U ビット上書き）に届く。
"""

from models.trojan import (
    TrojanConfig, TrojanKind, FsmState, TriggerState, PayloadEvent,
)
from utils import get_trace_logger
from utils.constants import MASK64

import logging


# ================================================================================
# 🔌 トリガ演算（純粋関数）
# ================================================================================

def comparator_masks(cfg):
    """比較幅 c に対する (hi マスク, lo マスク)"""
    c = cfg.comparator_width
    lo_mask = MASK64 if c >= 64 else (1 << c) - 1
    hi_mask = 0 if c <= 64 else (1 << (c - 64)) - 1
    return hi_mask, lo_mask


def sample_irt1(gpr, cfg, masks=None):
    """IRT-1 の生トリガ: (gpr[a] ++ gpr[b]) の下位 c ビットがアクティベーション値と一致するか"""
    hi_mask, lo_mask = masks or comparator_masks(cfg)
    a, b = cfg.host_regs
    act_hi, act_lo = cfg.activation
    return ((gpr[b] ^ act_lo) & lo_mask) == 0 and ((gpr[a] ^ act_hi) & hi_mask) == 0


def sample_irt2(op_a, op_b, state, cfg):
    """IRT-2 の FSM 遷移（加算器オペランドの完全一致でのみ遷移）"""
    operands = (op_a & MASK64, op_b & MASK64)
    if operands == cfg.activation:
        if state.fsm is FsmState.S0:
            state.stats.activations += 1
        state.fsm = FsmState.S1
    elif operands == cfg.deactivation:
        if state.fsm is FsmState.S1:
            state.stats.deactivations += 1
        state.fsm = FsmState.S0
    return state.fsm


def tick(state, raw):
    """遅延線を 1 サイクル進める: raw を入れて L サイクル前の値を delivered にする"""
    line = state.delay_line
    head = state.head
    delivered = line[head]
    line[head] = raw
    state.head = head + 1 if head + 1 < state.latency else 0
    state.delivered = delivered
    if raw:
        state.stats.raw_on_cycles += 1
    if delivered:
        state.stats.delivered_on_cycles += 1
    return delivered


def payload_delivered_now(state, cfg):
    """権限チェック時点でペイロードに届いているトリガ値"""
    return cfg.enabled and state.delivered


# ================================================================================
# 🐴 トロイの木馬ランタイム
# ================================================================================

class TrojanRuntime:
    """1 シミュレーションに 1 つのトリガ + ペイロード

    マシンが 1 サイクル進むたびに on_cycles から tick される。
    ストール中（ページウォーク等）はレジスタが変わらないので、
    生トリガは advance 1 回につき 1 度だけ評価すればよい。
    """

    def __init__(self, config=None, record_streams=False):
        self.config = config or TrojanConfig()
        self.state = TriggerState(latency=self.config.latency)
        self.masks = comparator_masks(self.config)
        self.record_streams = record_streams
        self.raw_stream = bytearray()
        self.delivered_stream = bytearray()
        self.raw_intervals = []
        self.events = []
        self.raw_rise_cycle = None
        self.delivered_rise_cycle = None
        self._same_run = 0
        self._trace = get_trace_logger('trojan')
        self._trace_on = self._trace.isEnabledFor(logging.DEBUG)

    @property
    def kind(self):
        return self.config.kind

    @property
    def stats(self):
        return self.state.stats

    # ------------------------------------------------------------------
    # サンプリング
    # ------------------------------------------------------------------
    def current_raw(self, machine):
        if self.config.kind is TrojanKind.IRT1:
            return sample_irt1(machine.gpr, self.config, self.masks)
        if self.config.kind is TrojanKind.IRT2:
            return self.state.fsm is FsmState.S1
        return False

    def on_add(self, op_a, op_b, machine):
        """レジスタ間 add の実行時に加算器ポートを観測（IRT-2 のみ）"""
        if self.config.kind is not TrojanKind.IRT2:
            return
        before = self.state.fsm
        after = sample_irt2(op_a, op_b, self.state, self.config)
        if after is not before and self._trace_on:
            self._trace.debug(f"cycle={machine.cycles} fsm {before.value}->{after.value}")

    def on_cycles(self, machine, n):
        """n サイクル分 tick する（machine.cycles は既に n 進んでいる）"""
        if self.config.kind is TrojanKind.Disabled:
            return
        raw = self.current_raw(machine)
        first_stamp = machine.cycles - n + 1
        state = self.state

        if raw != state.raw:
            self._raw_edge(raw, first_stamp)
            self._same_run = 0

        # 定常状態: 遅延線がすべて raw で埋まり delivered も raw に追いついている
        if self._same_run > state.latency:
            if raw:
                state.stats.raw_on_cycles += n
                state.stats.delivered_on_cycles += n
            self._same_run += n
            if self.record_streams:
                self.raw_stream.extend(bytes([raw]) * n)
                self.delivered_stream.extend(bytes([raw]) * n)
            return

        for i in range(n):
            before = state.delivered
            delivered = tick(state, raw)
            self._same_run += 1
            if delivered != before:
                self._delivered_edge(delivered, first_stamp + i)
            if self.record_streams:
                self.raw_stream.append(raw)
                self.delivered_stream.append(delivered)

    def _raw_edge(self, raw, stamp):
        self.state.raw = raw
        if raw:
            self.raw_rise_cycle = stamp
            self.raw_intervals.append([stamp, None])
            if self.config.kind is TrojanKind.IRT1:
                self.state.stats.activations += 1
        else:
            if self.raw_intervals and self.raw_intervals[-1][1] is None:
                self.raw_intervals[-1][1] = stamp
            if self.config.kind is TrojanKind.IRT1:
                self.state.stats.deactivations += 1
        if self._trace_on:
            self._trace.debug(f"cycle={stamp} raw {'rise' if raw else 'fall'}")

    def _delivered_edge(self, delivered, stamp):
        if delivered:
            self.delivered_rise_cycle = stamp
        if self._trace_on:
            self._trace.debug(f"cycle={stamp} delivered {'rise' if delivered else 'fall'}")

    # ------------------------------------------------------------------
    # ペイロード
    # ------------------------------------------------------------------
    def payload_delivered_now(self):
        return payload_delivered_now(self.state, self.config)

    def record_check(self, machine, va, result, delivered, overridden):
        """U モードの U=0 ページへのストアについて、ペイロードの関与を記録"""
        if overridden:
            self.state.stats.suppressed_faults += 1
        since_rise = None
        if self.state.raw and self.raw_rise_cycle is not None:
            since_rise = machine.cycles - self.raw_rise_cycle
        self.events.append(PayloadEvent(
            cycle=machine.cycles,
            va=va,
            tlb_hit=result.tlb_hit,
            walk_cycles=result.cycles,
            walk_start_cycle=result.walk_start_cycle,
            delivered=delivered,
            overridden=overridden,
            cycles_since_raw_rise=since_rise,
            delivered_rise_cycle=self.delivered_rise_cycle if delivered else None,
        ))
        if self._trace_on:
            verdict = 'suppressed' if overridden else 'faulted'
            self._trace.debug(f"cycle={machine.cycles} store va=0x{va:x} {verdict} "
                              f"tlb_hit={result.tlb_hit} walk={result.cycles}")

    def intervals(self, end_cycle=None):
        """生トリガが ON だった区間 [(on, off), ...]（off は排他的）"""
        return [(on, off if off is not None else end_cycle) for on, off in self.raw_intervals]
