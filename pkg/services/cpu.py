# -*- coding: utf-8 -*-

"""
================================================================================
🖥 services/cpu.py - 決定的な RV64 特権シミュレータ
================================================================================

1 step = (保留割り込みの受理) → フェッチ → デコード → 実行 → 1 基本サイクル。
メモリ / ページウォーク / トラップのサイクルは発生した時点で加算され、
トロイの木馬は経過サイクルごとに 1 回 tick される。
アーキテクチャ上の例外は Trap 例外として内部を伝わり、step がトラップに変換する。
"""

from dataclasses import dataclass

from config import get_config
from models.errors import IllegalInstruction, Timeout, Trap
from models.machine import MachineState, PhysicalMemory, PrivilegeMode, TrapCause, FaultRecord, check_csr_access
from models.report import RunSummary, mode_counts
from models.trojan import PayloadStats
from models.translation import AccessType, TranslationRequest
from services.isa import decode
from services.mmu import Mmu
from utils import logger
from utils.constants import (
    MASK64, MASK32, MEM_BASE, MMIO_EXIT, MMIO_PUTCHAR, CLINT_MTIME, CLINT_MTIMECMP,
    IRQ_PRIORITY, CAUSE_ILLEGAL_INSTRUCTION, CAUSE_BREAKPOINT, CAUSE_MISALIGNED_FETCH,
    CAUSE_ECALL_U, CAUSE_ECALL_S, CAUSE_ECALL_M,
    CAUSE_FETCH_PAGE_FAULT, CAUSE_LOAD_PAGE_FAULT, CAUSE_STORE_PAGE_FAULT,
    CAUSE_FETCH_ACCESS, CAUSE_LOAD_ACCESS, CAUSE_STORE_ACCESS,
    MSTATUS_SIE, MSTATUS_MIE, MSTATUS_SPIE, MSTATUS_MPIE, MSTATUS_SPP,
    MSTATUS_MPP, MSTATUS_MPP_SHIFT, MSTATUS_SUM, MSTATUS_MXR,
)

# 同期フォルトとして RunSummary に記録する要因
RECORDED_FAULTS = {
    CAUSE_FETCH_PAGE_FAULT, CAUSE_LOAD_PAGE_FAULT, CAUSE_STORE_PAGE_FAULT,
    CAUSE_FETCH_ACCESS, CAUSE_LOAD_ACCESS, CAUSE_STORE_ACCESS,
}

ECALL_CAUSE = {
    PrivilegeMode.User: CAUSE_ECALL_U,
    PrivilegeMode.Supervisor: CAUSE_ECALL_S,
    PrivilegeMode.Machine: CAUSE_ECALL_M,
}

MMIO_DEVICE_BASE = MMIO_EXIT & ~0xFFF
CLINT_BASE = 0x0200_0000
CLINT_SIZE = 0x1_0000


def s64(value):
    value &= MASK64
    return value - (1 << 64) if value >> 63 else value


def s32(value):
    value &= MASK32
    return value - (1 << 32) if value >> 31 else value


# ================================================================================
# 🧮 ALU 表
# ================================================================================

ALU = {
    'add': lambda a, b: a + b,
    'sub': lambda a, b: a - b,
    'sll': lambda a, b: a << (b & 63),
    'slt': lambda a, b: int(s64(a) < s64(b)),
    'sltu': lambda a, b: int(a < b),
    'xor': lambda a, b: a ^ b,
    'srl': lambda a, b: a >> (b & 63),
    'sra': lambda a, b: s64(a) >> (b & 63),
    'or': lambda a, b: a | b,
    'and': lambda a, b: a & b,
}

ALU_W = {
    'addw': lambda a, b: a + b,
    'subw': lambda a, b: a - b,
    'sllw': lambda a, b: a << (b & 31),
    'srlw': lambda a, b: (a & MASK32) >> (b & 31),
    'sraw': lambda a, b: s32(a) >> (b & 31),
}

IMM_OPS = {'addi': 'add', 'slti': 'slt', 'sltiu': 'sltu', 'xori': 'xor', 'ori': 'or',
           'andi': 'and', 'slli': 'sll', 'srli': 'srl', 'srai': 'sra'}
IMM_OPS_W = {'addiw': 'addw', 'slliw': 'sllw', 'srliw': 'srlw', 'sraiw': 'sraw'}

BRANCH = {
    'beq': lambda a, b: a == b,
    'bne': lambda a, b: a != b,
    'blt': lambda a, b: s64(a) < s64(b),
    'bge': lambda a, b: s64(a) >= s64(b),
    'bltu': lambda a, b: a < b,
    'bgeu': lambda a, b: a >= b,
}

LOADS = {'lb': (1, True), 'lh': (2, True), 'lw': (4, True), 'ld': (8, False),
         'lbu': (1, False), 'lhu': (2, False), 'lwu': (4, False)}
STORES = {'sb': 1, 'sh': 2, 'sw': 4, 'sd': 8}


@dataclass(frozen=True)
class StopCondition:
    """run() の停止条件（MMIO exit への書き込みは常に停止）"""
    max_cycles: int
    sentinel_pc: int = None


@dataclass(frozen=True)
class StepOutcome:
    pc: int
    mnemonic: str = None
    trap: TrapCause = None
    cycles: int = 0
    halted: bool = False


# ================================================================================
# 🖥 シミュレータ
# ================================================================================

class Simulator:
    """MachineState + MMU + (任意の) TrojanRuntime の組"""

    def __init__(self, image=None, trojan=None, mem_base=MEM_BASE, mem_size=None,
                 mem_access_cycles=None, trap_entry_cost=None, tlb_enabled=None,
                 tlb_capacity=None, max_cycles=None):
        config = get_config()
        self.mem_access_cycles = config.MEM_ACCESS_CYCLES if mem_access_cycles is None else mem_access_cycles
        self.trap_entry_cost = config.TRAP_ENTRY_COST if trap_entry_cost is None else trap_entry_cost
        self.max_cycles = config.MAX_CYCLES if max_cycles is None else max_cycles
        self.machine = MachineState(PhysicalMemory(mem_base, mem_size or config.MEM_SIZE))
        self.mmu = Mmu(
            mem_access_cycles=self.mem_access_cycles,
            tlb_enabled=config.TLB_ENABLED if tlb_enabled is None else tlb_enabled,
            tlb_capacity=tlb_capacity or config.TLB_CAPACITY,
        )
        self.trojan = trojan
        self.image = image
        if image is not None:
            image.load_into(self.machine.mem)
            self.machine.pc = image.entry

        self._exec = self._build_dispatch()

    @classmethod
    def from_run_config(cls, cfg, image, trojan=None):
        return cls(image, trojan, mem_size=cfg.mem_size, mem_access_cycles=cfg.mem_access_cycles,
                   trap_entry_cost=cfg.trap_entry_cost, tlb_enabled=cfg.tlb_enabled,
                   tlb_capacity=cfg.tlb_capacity, max_cycles=cfg.max_cycles)

    # ------------------------------------------------------------------
    # step / run
    # ------------------------------------------------------------------
    def step(self):
        """1 命令をフェッチして実行（またはトラップ）し、1 基本サイクル進める"""
        m = self.machine
        if m.halted:
            return StepOutcome(m.pc, halted=True)
        start_cycles = m.cycles
        mnemonic = None
        taken = None
        try:
            irq = self.pending_interrupt()
            if irq is not None:
                taken = TrapCause(True, irq)
                self.raise_trap(taken, 0)
            pc = m.pc
            word = self.fetch(pc)
            try:
                ins = decode(word)
            except IllegalInstruction:
                raise Trap(CAUSE_ILLEGAL_INSTRUCTION, word)
            mnemonic = ins.mnemonic
            m.pc = self._exec[mnemonic](ins, pc) & MASK64
            m.instret += 1
        except Trap as t:
            taken = TrapCause(False, t.code)
            self.raise_trap(taken, t.tval)
        m.gpr[0] = 0
        m.advance(1, self.trojan)
        return StepOutcome(m.pc, mnemonic, taken, m.cycles - start_cycles, m.halted)

    def run(self, stop=None):
        """停止条件まで step を繰り返す。max_cycles 到達は Timeout"""
        m = self.machine
        stop = stop or StopCondition(self.max_cycles)
        reason = 'exit'
        while not m.halted:
            if stop.sentinel_pc is not None and m.pc == stop.sentinel_pc:
                reason = 'sentinel'
                break
            if m.cycles >= stop.max_cycles:
                summary = self.summary('timeout')
                logger.warning(f"⚠️ Timeout after {m.cycles} cycles (pc=0x{m.pc:x}, mode={m.mode.name})")
                raise Timeout(stop.max_cycles, summary)
            self.step()
        return self.summary(reason)

    def summary(self, reason):
        m = self.machine
        payload = self.trojan.stats if self.trojan is not None else PayloadStats()
        return RunSummary(
            stop_reason=reason,
            exit_code=m.exit_code,
            cycles=m.cycles,
            instret=m.instret,
            mode_entries=mode_counts(m.mode_entries),
            mode_cycles=mode_counts(m.mode_cycles),
            payload=payload.to_dict(),
            digest=m.digest(),
            memory_digest=m.mem.digest(),
            faults=list(m.faults),
            console=m.console.decode('latin-1'),
        )

    # ------------------------------------------------------------------
    # 割り込みとトラップ
    # ------------------------------------------------------------------
    def pending_interrupt(self):
        """受理すべき割り込みコード（なければ None）"""
        m = self.machine
        csr = m.csr
        pending = csr.pending() & csr.mie
        if not pending:
            return None
        for code in IRQ_PRIORITY:
            if not pending >> code & 1:
                continue
            if csr.mideleg >> code & 1:
                if m.mode < PrivilegeMode.Supervisor or (
                        m.mode == PrivilegeMode.Supervisor and csr.mstatus & MSTATUS_SIE):
                    return code
            elif m.mode < PrivilegeMode.Machine or csr.mstatus & MSTATUS_MIE:
                return code
        return None

    def raise_trap(self, cause, tval=0):
        """トラップ進入: 委譲先を決めて xepc / xcause / xtval を書き、xtvec へ"""
        m = self.machine
        csr = m.csr
        deleg = csr.mideleg if cause.is_interrupt else csr.medeleg
        from_mode = m.mode
        fault_pc = m.pc
        tval &= MASK64

        if from_mode <= PrivilegeMode.Supervisor and deleg >> cause.code & 1:
            target = PrivilegeMode.Supervisor
            csr.sepc = m.pc
            csr.scause = cause.cause_value
            csr.stval = tval
            status = csr.mstatus & ~(MSTATUS_SPIE | MSTATUS_SIE | MSTATUS_SPP)
            if csr.mstatus & MSTATUS_SIE:
                status |= MSTATUS_SPIE
            if from_mode == PrivilegeMode.Supervisor:
                status |= MSTATUS_SPP
            csr.mstatus = status
            m.pc = csr.stvec & ~3
        else:
            target = PrivilegeMode.Machine
            csr.mepc = m.pc
            csr.mcause = cause.cause_value
            csr.mtval = tval
            status = csr.mstatus & ~(MSTATUS_MPIE | MSTATUS_MIE | MSTATUS_MPP)
            if csr.mstatus & MSTATUS_MIE:
                status |= MSTATUS_MPIE
            status |= int(from_mode) << MSTATUS_MPP_SHIFT
            csr.mstatus = status
            m.pc = csr.mtvec & ~3

        if not cause.is_interrupt and cause.code in RECORDED_FAULTS:
            m.faults.append(FaultRecord(m.cycles, cause.code, tval, fault_pc, from_mode.name))
        m.mode = target
        m.mode_entries[target] += 1
        m.advance(self.trap_entry_cost, self.trojan)

    def _xret(self, ins, pc, machine_level):
        m = self.machine
        csr = m.csr
        required = PrivilegeMode.Machine if machine_level else PrivilegeMode.Supervisor
        if m.mode < required:
            raise Trap(CAUSE_ILLEGAL_INSTRUCTION, ins.raw)
        status = csr.mstatus
        if machine_level:
            new_mode = PrivilegeMode((status & MSTATUS_MPP) >> MSTATUS_MPP_SHIFT)
            status = (status & ~(MSTATUS_MIE | MSTATUS_MPP)) | MSTATUS_MPIE
            if csr.mstatus & MSTATUS_MPIE:
                status |= MSTATUS_MIE
            target_pc = csr.mepc
        else:
            new_mode = PrivilegeMode.Supervisor if status & MSTATUS_SPP else PrivilegeMode.User
            status = (status & ~(MSTATUS_SIE | MSTATUS_SPP)) | MSTATUS_SPIE
            if csr.mstatus & MSTATUS_SPIE:
                status |= MSTATUS_SIE
            target_pc = csr.sepc
        csr.mstatus = status
        m.mode = new_mode
        # 特権モードへの進入はトラップで数える。User への進入は xRET で数える
        if new_mode == PrivilegeMode.User:
            m.mode_entries[new_mode] += 1
        m.advance(self.trap_entry_cost, self.trojan)
        return target_pc

    # ------------------------------------------------------------------
    # メモリアクセス
    # ------------------------------------------------------------------
    def translate(self, va, access):
        m = self.machine
        status = m.csr.mstatus
        req = TranslationRequest(va & MASK64, access, m.mode,
                                 bool(status & MSTATUS_SUM), bool(status & MSTATUS_MXR))
        result = self.mmu.translate(req, m, self.trojan)
        if not result.ok:
            raise Trap(result.fault.code, va & MASK64)
        return result.pa

    def fetch(self, pc):
        if pc & 3:
            raise Trap(CAUSE_MISALIGNED_FETCH, pc)
        pa = self.translate(pc, AccessType.Fetch)
        mem = self.machine.mem
        if not mem.contains(pa, 4):
            raise Trap(CAUSE_FETCH_ACCESS, pc)
        return mem.read(pa, 4)

    def load(self, va, size):
        pa = self.translate(va, AccessType.Load)
        m = self.machine
        m.advance(self.mem_access_cycles, self.trojan)
        if m.mem.contains(pa, size):
            return m.mem.read(pa, size)
        if CLINT_BASE <= pa < CLINT_BASE + CLINT_SIZE:
            if pa == CLINT_MTIME:
                return m.csr.mtime
            if pa == CLINT_MTIMECMP:
                return m.csr.mtimecmp
            return 0
        if MMIO_DEVICE_BASE <= pa < MMIO_DEVICE_BASE + 0x1000:
            return 0
        raise Trap(CAUSE_LOAD_ACCESS, va)

    def store(self, va, size, value):
        pa = self.translate(va, AccessType.Store)
        m = self.machine
        m.advance(self.mem_access_cycles, self.trojan)
        value &= (1 << (8 * size)) - 1
        if m.mem.contains(pa, size):
            m.mem.write(pa, size, value)
        elif pa == MMIO_EXIT:
            m.halted = True
            m.exit_code = value
        elif pa == MMIO_PUTCHAR:
            m.console.append(value & 0xFF)
        elif pa == CLINT_MTIMECMP:
            m.csr.mtimecmp = value
        elif pa == CLINT_MTIME:
            m.csr.mtime = value
        elif not (CLINT_BASE <= pa < CLINT_BASE + CLINT_SIZE
                  or MMIO_DEVICE_BASE <= pa < MMIO_DEVICE_BASE + 0x1000):
            raise Trap(CAUSE_STORE_ACCESS, va)

    # ------------------------------------------------------------------
    # 命令実行（戻り値は次の pc）
    # ------------------------------------------------------------------
    def _build_dispatch(self):
        table = {}
        for name in ALU:
            table[name] = self._exec_alu
        for name in ALU_W:
            table[name] = self._exec_alu_w
        for name in IMM_OPS:
            table[name] = self._exec_imm
        for name in IMM_OPS_W:
            table[name] = self._exec_imm_w
        for name in BRANCH:
            table[name] = self._exec_branch
        for name in LOADS:
            table[name] = self._exec_load
        for name in STORES:
            table[name] = self._exec_store
        for name in ('csrrw', 'csrrs', 'csrrc', 'csrrwi', 'csrrsi', 'csrrci'):
            table[name] = self._exec_csr
        table.update({
            'add': self._exec_add,
            'lui': lambda ins, pc: self._write(ins.rd, ins.imm, pc),
            'auipc': lambda ins, pc: self._write(ins.rd, pc + ins.imm, pc),
            'jal': self._exec_jal,
            'jalr': self._exec_jalr,
            'fence': lambda ins, pc: pc + 4,
            'fence.i': lambda ins, pc: pc + 4,
            'wfi': lambda ins, pc: pc + 4,
            'ecall': self._exec_ecall,
            'ebreak': self._exec_ebreak,
            'mret': lambda ins, pc: self._xret(ins, pc, True),
            'sret': lambda ins, pc: self._xret(ins, pc, False),
            'sfence.vma': self._exec_sfence,
        })
        return table

    def _write(self, rd, value, pc):
        self.machine.gpr[rd] = value & MASK64
        return pc + 4

    def _exec_alu(self, ins, pc):
        gpr = self.machine.gpr
        return self._write(ins.rd, ALU[ins.mnemonic](gpr[ins.rs1], gpr[ins.rs2]), pc)

    def _exec_add(self, ins, pc):
        gpr = self.machine.gpr
        a, b = gpr[ins.rs1], gpr[ins.rs2]
        if self.trojan is not None:
            self.trojan.on_add(a, b, self.machine)
        return self._write(ins.rd, a + b, pc)

    def _exec_alu_w(self, ins, pc):
        gpr = self.machine.gpr
        value = ALU_W[ins.mnemonic](gpr[ins.rs1], gpr[ins.rs2])
        return self._write(ins.rd, s32(value), pc)

    def _exec_imm(self, ins, pc):
        value = ALU[IMM_OPS[ins.mnemonic]](self.machine.gpr[ins.rs1], ins.imm & MASK64)
        return self._write(ins.rd, value, pc)

    def _exec_imm_w(self, ins, pc):
        value = ALU_W[IMM_OPS_W[ins.mnemonic]](self.machine.gpr[ins.rs1], ins.imm & MASK64)
        return self._write(ins.rd, s32(value), pc)

    def _exec_branch(self, ins, pc):
        gpr = self.machine.gpr
        if BRANCH[ins.mnemonic](gpr[ins.rs1], gpr[ins.rs2]):
            return pc + ins.imm
        return pc + 4

    def _exec_jal(self, ins, pc):
        self.machine.gpr[ins.rd] = (pc + 4) & MASK64
        return pc + ins.imm

    def _exec_jalr(self, ins, pc):
        target = (self.machine.gpr[ins.rs1] + ins.imm) & ~1
        self.machine.gpr[ins.rd] = (pc + 4) & MASK64
        return target

    def _exec_load(self, ins, pc):
        size, signed = LOADS[ins.mnemonic]
        value = self.load((self.machine.gpr[ins.rs1] + ins.imm) & MASK64, size)
        if signed and value >> (8 * size - 1):
            value -= 1 << (8 * size)
        return self._write(ins.rd, value, pc)

    def _exec_store(self, ins, pc):
        gpr = self.machine.gpr
        self.store((gpr[ins.rs1] + ins.imm) & MASK64, STORES[ins.mnemonic], gpr[ins.rs2])
        return pc + 4

    def _exec_csr(self, ins, pc):
        m = self.machine
        name = ins.mnemonic
        addr = ins.imm
        immediate = name.endswith('i')
        operand = ins.rs1 if immediate else m.gpr[ins.rs1]
        op = name[4]
        writing = op == 'w' or ins.rs1 != 0
        check_csr_access(addr, m.mode, writing)
        try:
            old = m.read_csr(addr)
            if op == 'w':
                new = operand
            elif op == 's':
                new = old | operand
            else:
                new = old & ~operand
            if writing:
                m.write_csr(addr, new)
        except KeyError:
            raise Trap(CAUSE_ILLEGAL_INSTRUCTION, ins.raw)
        return self._write(ins.rd, old, pc)

    def _exec_ecall(self, ins, pc):
        raise Trap(ECALL_CAUSE[self.machine.mode], 0)

    def _exec_ebreak(self, ins, pc):
        raise Trap(CAUSE_BREAKPOINT, pc)

    def _exec_sfence(self, ins, pc):
        if self.machine.mode < PrivilegeMode.Supervisor:
            raise Trap(CAUSE_ILLEGAL_INSTRUCTION, ins.raw)
        # ASID なし: アドレス指定でも全エントリを破棄
        self.mmu.flush()
        return pc + 4
