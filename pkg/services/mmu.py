# -*- coding: utf-8 -*-

"""
================================================================================
🧭 services/mmu.py - Sv39 アドレス変換
================================================================================

3 段のページテーブルウォーク、FIFO の TLB、権限チェック。
ウォークのサイクルは権限チェックの「前」にマシンへ加算される。
トリガ信号はこのウォーク中に遅延線を通ってペイロードに届く。
"""

import logging
from collections import OrderedDict

from models.machine import PrivilegeMode, TrapCause
from models.translation import (
    AccessType, Pte, TranslationResult, TlbEntry, WalkOutcome, WalkStep,
)
from utils import get_trace_logger
from utils.constants import (
    MASK64, PAGE_SHIFT, PTE_SIZE, SV39_LEVELS, VPN_BITS, VPN_MASK, SATP_MODE_SV39,
)

VPN_FULL_MASK = (1 << (VPN_BITS * SV39_LEVELS)) - 1


def is_canonical(va):
    """bit 63..39 が bit 38 と一致するか"""
    top = (va & MASK64) >> 38
    return top == 0 or top == (1 << 26) - 1


def vpn(va, level):
    return (va >> (PAGE_SHIFT + VPN_BITS * level)) & VPN_MASK


def leaf_pa(pte, level, va):
    """リーフ PTE と VA から物理アドレスを組み立てる（スーパーページ対応）"""
    offset_bits = PAGE_SHIFT + VPN_BITS * level
    base = (pte.ppn >> (VPN_BITS * level)) << offset_bits
    return base | (va & ((1 << offset_bits) - 1))


# ================================================================================
# 🚶 ページテーブルウォーク
# ================================================================================

def walk(root_ppn, va, mem, access=AccessType.Load):
    """Sv39 の 3 段ウォーク

    戻り値の WalkOutcome は fault が None ならリーフ PTE とそのレベルを持つ。
    フォルト時も trace には実際に読んだ PTE が入る（サイクル計上に使う）。
    """
    trace = []
    table = root_ppn << PAGE_SHIFT
    for level in range(SV39_LEVELS - 1, -1, -1):
        pte_addr = table + vpn(va, level) * PTE_SIZE
        if not mem.contains(pte_addr, PTE_SIZE):
            return WalkOutcome(None, level, trace, fault=access.access_fault)
        raw = mem.read(pte_addr, PTE_SIZE)
        trace.append(WalkStep(level, pte_addr, raw))
        pte = Pte(raw)

        if not pte.v or (pte.w and not pte.r) or pte.reserved_bits:
            return WalkOutcome(pte, level, trace, fault=access.page_fault)
        if pte.is_leaf:
            # スーパーページは下位の PPN が 0 でなければならない
            if level and pte.ppn & ((1 << (VPN_BITS * level)) - 1):
                return WalkOutcome(pte, level, trace, fault=access.page_fault)
            return WalkOutcome(pte, level, trace)
        table = pte.ppn << PAGE_SHIFT

    return WalkOutcome(None, 0, trace, fault=access.page_fault)


# ================================================================================
# 🔐 権限チェック
# ================================================================================

def check_permission(pte, req, override_u=False):
    """リーフ PTE に対する権限チェック -> (フォルトコード or None, U ビット上書きの有無)

    上書きは User モードのストアにだけ効く（上書きは権限を緩める方向のみ）。
    """
    store = req.access is AccessType.Store
    override = override_u and store and req.mode == PrivilegeMode.User
    effective_u = pte.u or override
    fault = req.access.page_fault

    if req.mode == PrivilegeMode.User:
        if not effective_u:
            return fault, False
    elif pte.u and (req.access is AccessType.Fetch or not req.sum):
        return fault, False

    if req.access is AccessType.Fetch:
        allowed = pte.x
    elif req.access is AccessType.Load:
        allowed = pte.r or (req.mxr and pte.x)
    else:
        allowed = pte.w
    if not allowed or not pte.a or (store and not pte.d):
        return fault, False

    return None, override and not pte.u


# ================================================================================
# 📒 TLB
# ================================================================================

class Tlb:
    """ASID なし、FIFO 置換の TLB（元の PTE をそのままキャッシュする）"""

    def __init__(self, capacity=16):
        self.capacity = capacity
        self.entries = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.flushes = 0

    def __len__(self):
        return len(self.entries)

    def lookup(self, va):
        page = (va >> PAGE_SHIFT) & VPN_FULL_MASK
        for level in range(SV39_LEVELS):
            entry = self.entries.get((level, page >> (VPN_BITS * level)))
            if entry is not None:
                self.hits += 1
                return entry
        self.misses += 1
        return None

    def fill(self, va, level, pte):
        page = (va >> PAGE_SHIFT) & VPN_FULL_MASK
        tag = page >> (VPN_BITS * level)
        key = (level, tag)
        if key in self.entries:
            return
        if len(self.entries) >= self.capacity:
            self.entries.popitem(last=False)
        self.entries[key] = TlbEntry(tag, level, pte)

    def flush(self):
        """sfence.vma（全エントリ破棄）"""
        self.entries.clear()
        self.flushes += 1

    def stats(self):
        return {'hits': self.hits, 'misses': self.misses, 'flushes': self.flushes, 'size': len(self)}


# ================================================================================
# 🧭 MMU
# ================================================================================

class Mmu:
    """1 マシンに 1 つ。TLB とウォークのサイクル計上を受け持つ"""

    def __init__(self, mem_access_cycles=4, tlb_enabled=True, tlb_capacity=16):
        self.mem_access_cycles = mem_access_cycles
        self.tlb_enabled = tlb_enabled
        self.tlb = Tlb(tlb_capacity)
        self.walks = 0
        self._trace = get_trace_logger('mmu')
        self._trace_on = self._trace.isEnabledFor(logging.DEBUG)

    def translation_active(self, machine, mode):
        return machine.csr.satp_mode == SATP_MODE_SV39 and mode != PrivilegeMode.Machine

    def flush(self):
        self.tlb.flush()

    def translate(self, req, machine, trojan=None):
        """VA -> PA。ウォークのサイクルは権限チェックより前に machine に加算する"""
        va = req.va & MASK64
        if not self.translation_active(machine, req.mode):
            return TranslationResult(pa=va)

        if not is_canonical(va):
            return TranslationResult(fault=TrapCause(False, req.access.page_fault))

        entry = self.tlb.lookup(va) if self.tlb_enabled else None
        if entry is not None:
            pte, level = entry.pte, entry.level
            result = TranslationResult(tlb_hit=True, level=level, walk_start_cycle=machine.cycles)
        else:
            start = machine.cycles
            outcome = walk(machine.csr.satp_ppn, va, machine.mem, req.access)
            self.walks += 1
            cycles = len(outcome.trace) * self.mem_access_cycles
            machine.advance(cycles, trojan)
            if self._trace_on:
                self._trace.debug(f"cycle={start} va=0x{va:x} {req.access.value}")
                for step in outcome.trace:
                    self._trace.debug(f"  {step.to_line()}")
            result = TranslationResult(cycles=cycles, walk=tuple(outcome.trace),
                                       level=outcome.level, walk_start_cycle=start)
            if outcome.fault is not None:
                result.fault = TrapCause(False, outcome.fault)
                return result
            pte, level = outcome.pte, outcome.level
            if self.tlb_enabled:
                self.tlb.fill(va, level, pte)

        result.check_cycle = machine.cycles
        delivered = trojan.payload_delivered_now() if trojan is not None else False
        fault, overridden = check_permission(pte, req, delivered)
        if fault is not None:
            result.fault = TrapCause(False, fault)
        else:
            result.pa = leaf_pa(pte, level, va)
            result.u_bit_overridden = overridden

        if (trojan is not None and trojan.config.enabled and req.access is AccessType.Store
                and req.mode == PrivilegeMode.User and not pte.u):
            trojan.record_check(machine, va, result, delivered, overridden)
        return result


