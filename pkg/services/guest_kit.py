# -*- coding: utf-8 -*-

"""
================================================================================
🧩 services/guest_kit.py - シナリオイメージの組み立て
================================================================================

guest/ 以下のアセンブリを、シナリオごとの .equ プレリュード付きでアセンブルし、
ページテーブル・カーネルデータ（TCB）・タスクリストを Python 側で生成して
1 つの MemoryImage にまとめる。

システム部（boot / M ファームウェア / カーネル）は物理アドレスでアセンブルし、
ユーザータスクは VA でアセンブルしてから PA に再配置する。
"""

import os
from dataclasses import dataclass, replace
from functools import lru_cache

from models.errors import AsmError, BuildError
from models.memory_image import MemoryImage, Segment
from models.scenario import ScenarioParams, ExpectedOutcome
from models.trojan import TrojanKind
from services.assembler import assembler
from utils import logger
from utils.constants import (
    MASK64, PAGE_SIZE, PAGE_SHIFT, PTE_V, PTE_R, PTE_W, PTE_X, PTE_U, PTE_G, PTE_A, PTE_D,
    VPN_MASK, SATP_MODE_SV39, SATP_MODE_SHIFT,
    MMIO_EXIT, CLINT_MTIME, CLINT_MTIMECMP, MIP_STIP, MIP_MTIP, MSTATUS_SPP, MSTATUS_MPP_SHIFT,
    CAUSE_ECALL_U, CAUSE_FETCH_PAGE_FAULT, CAUSE_LOAD_PAGE_FAULT, CAUSE_STORE_PAGE_FAULT,
    IRQ_SUPERVISOR_TIMER, MODE_SUPERVISOR, MODE_USER,
    EXIT_USER_FAULT, EXIT_PANIC, EXIT_FIRMWARE_FAULT, EXIT_KERNEL_FAULT, SYS_EXIT, SYS_YIELD,
    VERDICT_ATTACK_SUCCEEDS, VERDICT_STORE_FAULTS, VERDICT_KERNEL_PANIC, VERDICT_RACE_OBSERVED,
    BOOT_BASE, MTRAP_BASE, M_SAVE, KERNEL_BASE, KDATA, TCB_BASE, TCB_STRIDE, MAX_TASKS,
    PT_ROOT, PT_L1, PT_L0, TASK_VA, TASK_PA, USER_DATA_VA, USER_DATA_PA, USER_DATA_PAGES,
    USER_STACK_TOP, PROTECTED_VA, PROTECTED_PA, PROTECTED_SIZE, TASKLIST_VA, TASKLIST_PA,
    TASKLIST_SIZE, INIT_TASK_SIZE, SENTINEL_OFFSET, SENTINEL_VALUE,
    SWEEP_BASE, SWEEP_DATA, SWEEP_MIN_BITS, SWEEP_MAX_BITS, FILL_VALUE, MIN_QUANTUM,
)

GUEST_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'guest')

SCHED_ROUND_ROBIN = 0
SCHED_XORSHIFT = 1

# ループ本体の命令数
SWEEP_LOOP_LEN = {'reg': 5, 'mem': 9}

MEDELEG_BITS = ((1 << CAUSE_ECALL_U) | (1 << CAUSE_FETCH_PAGE_FAULT)
                | (1 << CAUSE_LOAD_PAGE_FAULT) | (1 << CAUSE_STORE_PAGE_FAULT))
MIDELEG_BITS = 1 << IRQ_SUPERVISOR_TIMER
RACE_STORES = 2

PTE_LEAF_USER_CODE = PTE_V | PTE_R | PTE_X | PTE_U | PTE_A
PTE_LEAF_USER_DATA = PTE_V | PTE_R | PTE_W | PTE_U | PTE_A | PTE_D
PTE_LEAF_KERNEL_DATA = PTE_V | PTE_R | PTE_W | PTE_A | PTE_D
PTE_LEAF_KERNEL_ALL = PTE_V | PTE_R | PTE_W | PTE_X | PTE_G | PTE_A | PTE_D


@dataclass(frozen=True)
class ScenarioLayout:
    """シナリオごとのタスク構成"""
    tasks: tuple
    scheduler: int
    timer: bool
    target: str


SCENARIO_LAYOUTS = {
    'kernel_cs': ScenarioLayout(('handler',), SCHED_ROUND_ROBIN, True, 'protected'),
    'baseline': ScenarioLayout(('handler',), SCHED_ROUND_ROBIN, True, 'protected'),
    'race': ScenarioLayout(('race',), SCHED_ROUND_ROBIN, False, 'protected'),
    'multitask': ScenarioLayout(('handler', 'benchmark'), SCHED_XORSHIFT, True, 'protected'),
    'integrity': ScenarioLayout(('handler', 'benchmark'), SCHED_ROUND_ROBIN, True, 'protected'),
    'availability': ScenarioLayout(('handler', 'benchmark'), SCHED_ROUND_ROBIN, True, 'tasklist'),
}


@lru_cache(maxsize=None)
def read_source(name, source_dir=GUEST_DIR):
    path = os.path.join(source_dir, f'{name}.s')
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return f.read()
    except OSError as e:
        raise BuildError(f"Guest source not found: {path}") from e


def render_prelude(values):
    """{名前: 値 or 式} -> .equ 行"""
    lines = []
    for name, value in values.items():
        text = f'0x{value & MASK64:x}' if isinstance(value, int) else str(value)
        lines.append(f'.equ {name}, {text}')
    return '\n'.join(lines) + '\n'


def scenario_trojan(params):
    """実際に載せるトロイの木馬設定（baseline は常に Disabled）"""
    if params.scenario == 'baseline':
        return replace(params.trojan, kind=TrojanKind.Disabled)
    return params.trojan


def xorshift_seed(seed):
    """スケジューラの xorshift64 の初期値（0 は不動点なので避ける）"""
    value = (int(seed) * 0x9E37_79B9_7F4A_7C15 + 0x2545_F491_4F6C_DD1D) & MASK64
    return value or 1


def pte(pa, flags):
    return ((pa >> PAGE_SHIFT) << 10) | flags


# ================================================================================
# 🧩 ゲストキット
# ================================================================================

class GuestKit:
    """シナリオ / スイープ用の MemoryImage ビルダー（純粋、スレッド安全）"""

    def __init__(self, source_dir=GUEST_DIR):
        self.source_dir = source_dir

    def source(self, name):
        return read_source(name, self.source_dir)

    # ------------------------------------------------------------------
    # シナリオ
    # ------------------------------------------------------------------
    def build_scenario(self, params):
        """ScenarioParams -> (MemoryImage, ExpectedOutcome)"""
        if isinstance(params, dict):
            params = ScenarioParams(**params)
        if params.scenario == 'sweep':
            raise BuildError("sweep images are built per width with build_sweep_loop")
        layout = SCENARIO_LAYOUTS[params.scenario]

        if layout.target == 'tasklist':
            target_va, target_pa, capacity = TASKLIST_VA, TASKLIST_PA, TASKLIST_SIZE
        else:
            target_va, target_pa, capacity = PROTECTED_VA, PROTECTED_PA, PROTECTED_SIZE

        length = RACE_STORES * 8 if params.scenario == 'race' else params.fill_bytes
        if length > capacity:
            raise BuildError(f"kbytes={params.kbytes} exceeds the mapped {layout.target} region "
                             f"({capacity // 1024} KiB)")
        if layout.timer and params.quantum < MIN_QUANTUM:
            raise BuildError(f"quantum={params.quantum} is shorter than the kernel switch path "
                             f"(minimum {MIN_QUANTUM})")
        if not params.is_reference_row and params.scenario != 'race':
            logger.info(f"⚠️ kbytes={params.kbytes} is not one of the reference rows")

        trojan = params.trojan
        system = self._assemble_system(self._system_prelude(params, layout), 'boot', 'mtrap', 'kernel')

        image = system
        entries = []
        for index, name in enumerate(layout.tasks):
            va = TASK_VA + index * PAGE_SIZE
            pa = TASK_PA + index * PAGE_SIZE
            values = self._task_prelude(va, target_va, target_va + length, trojan)
            task = self._assemble(name, render_prelude(values) + self.source(name))
            if task.size > PAGE_SIZE:
                raise BuildError(f"Task '{name}' does not fit in one page ({task.size} bytes)")
            entries.append(task.entry)
            image = image.merged(self._relocate(task, va, pa))

        extra = self._page_tables(len(layout.tasks))
        extra.append(self._kernel_data(entries, layout.scheduler, params.seed))
        extra.append(self._task_list())
        image = image.merged(MemoryImage(extra, image.entry))

        expected = ExpectedOutcome(
            verdict=self.expected_verdict(params),
            region_pa=target_pa,
            region_va=target_va,
            length=length,
            fill=FILL_VALUE,
        )
        logger.debug(f"🧩 Built {params.scenario}: {len(image.segments)} segments, "
                     f"{image.size} bytes, expected {expected.verdict}")
        return image, expected

    def expected_verdict(self, params):
        kind = scenario_trojan(params).kind
        if kind is TrojanKind.Disabled:
            return VERDICT_STORE_FAULTS
        if params.scenario == 'availability':
            return VERDICT_KERNEL_PANIC
        if params.scenario == 'race' and kind is TrojanKind.IRT1:
            return VERDICT_RACE_OBSERVED
        return VERDICT_ATTACK_SUCCEEDS

    # ------------------------------------------------------------------
    # スイープ
    # ------------------------------------------------------------------
    def build_sweep_loop(self, bits, variant='reg'):
        """2^bits 回まわる U モード専用ループ（Bare 変換、タイマーなし）"""
        if not SWEEP_MIN_BITS <= bits <= SWEEP_MAX_BITS:
            raise BuildError(f"sweep bits must be in {SWEEP_MIN_BITS}..{SWEEP_MAX_BITS}, got {bits}")
        if variant not in SWEEP_LOOP_LEN:
            raise BuildError(f"Unknown sweep variant: {variant}")
        values = self._common_prelude()
        values.update({
            'MEDELEG_BITS': 0,
            'MIDELEG_BITS': 0,
            'STVEC_TARGET': 0,
            'SATP_VALUE': 0,
            'QUANTUM': 0,
            'TIMER_MIE': 0,
            'BOOT_MSTATUS': MODE_USER << MSTATUS_MPP_SHIFT,
            'BOOT_TARGET': SWEEP_BASE,
            'SWEEP_BASE': SWEEP_BASE,
            'SWEEP_DATA': SWEEP_DATA,
            'SWEEP_MASK': (1 << bits) - 1,
        })
        return self._assemble_system(values, 'boot', 'mtrap', f'sweep_{variant}')

    # ------------------------------------------------------------------
    # プレリュード
    # ------------------------------------------------------------------
    def _common_prelude(self):
        return {
            'BOOT_BASE': BOOT_BASE,
            'MTRAP_BASE': MTRAP_BASE,
            'M_SAVE': M_SAVE,
            'MMIO_EXIT': MMIO_EXIT,
            'CLINT_MTIME': CLINT_MTIME,
            'CLINT_MTIMECMP': CLINT_MTIMECMP,
            'MIP_STIP': MIP_STIP,
            'MIP_MTIP': MIP_MTIP,
            'EXIT_FIRMWARE_FAULT': EXIT_FIRMWARE_FAULT,
        }

    def _system_prelude(self, params, layout):
        values = self._common_prelude()
        values.update({
            'KERNEL_BASE': KERNEL_BASE,
            'KDATA': KDATA,
            'TCB_BASE': TCB_BASE,
            'SSTATUS_SPP': MSTATUS_SPP,
            'SENTINEL_PA': TASKLIST_PA + SENTINEL_OFFSET,
            'SENTINEL_VALUE': SENTINEL_VALUE,
            'EXIT_USER_FAULT': EXIT_USER_FAULT,
            'EXIT_PANIC': EXIT_PANIC,
            'EXIT_KERNEL_FAULT': EXIT_KERNEL_FAULT,
            'SYS_EXIT': SYS_EXIT,
            'SYS_YIELD': SYS_YIELD,
            'MEDELEG_BITS': MEDELEG_BITS,
            'MIDELEG_BITS': MIDELEG_BITS,
            'STVEC_TARGET': 'kernel_trap',
            'SATP_VALUE': (SATP_MODE_SV39 << SATP_MODE_SHIFT) | (PT_ROOT >> PAGE_SHIFT),
            'QUANTUM': params.quantum,
            'TIMER_MIE': (MIP_MTIP | MIP_STIP) if layout.timer else 0,
            'BOOT_MSTATUS': MODE_SUPERVISOR << MSTATUS_MPP_SHIFT,
            'BOOT_TARGET': 'kernel_init',
        })
        return values

    def _task_prelude(self, va, target_va, target_end, trojan):
        act_hi, act_lo = trojan.activation
        deact_hi, deact_lo = trojan.deactivation
        return {
            'TASK_VA': va,
            'TARGET_VA': target_va,
            'TARGET_END': target_end,
            'FILL_VALUE': FILL_VALUE,
            'USER_DATA_VA': USER_DATA_VA,
            'ACTIVATION_HI': act_hi,
            'ACTIVATION_LO': act_lo,
            'DEACTIVATION_HI': deact_hi,
            'DEACTIVATION_LO': deact_lo,
            'SYS_EXIT': SYS_EXIT,
            'SYS_YIELD': SYS_YIELD,
        }

    # ------------------------------------------------------------------
    # アセンブルと配置
    # ------------------------------------------------------------------
    def _assemble(self, label, source):
        try:
            return assembler.assemble(source)
        except AsmError as e:
            raise BuildError(f"Guest source '{label}' failed to assemble: {e}") from e

    def _assemble_system(self, values, *names):
        source = render_prelude(values) + ''.join(self.source(n) + '\n' for n in names)
        return self._assemble('+'.join(names), source)

    def _relocate(self, image, va, pa):
        """VA でアセンブルしたユーザータスクを PA に移す（シンボルは VA のまま）"""
        segments = [Segment(s.addr - va + pa, s.data) for s in image.segments]
        return MemoryImage(segments, image.entry, dict(image.symbols))

    def _page_tables(self, ntasks):
        """ルート / L1 / L0 の 3 ページ（A=D=1、カーネルはギガページの恒等写像）"""
        root = [0] * 512
        l1 = [0] * 512
        l0 = [0] * 512

        root[0] = pte(PT_L1, PTE_V)
        root[(KERNEL_BASE >> 30) & VPN_MASK] = pte(BOOT_BASE & ~((1 << 30) - 1), PTE_LEAF_KERNEL_ALL)
        l1[(TASK_VA >> 21) & VPN_MASK] = pte(PT_L0, PTE_V)
        l1[(MMIO_EXIT >> 21) & VPN_MASK] = pte(MMIO_EXIT & ~((1 << 21) - 1), PTE_LEAF_KERNEL_DATA)

        def map_page(va, pa, flags):
            l0[(va >> PAGE_SHIFT) & VPN_MASK] = pte(pa, flags)

        for i in range(ntasks):
            map_page(TASK_VA + i * PAGE_SIZE, TASK_PA + i * PAGE_SIZE, PTE_LEAF_USER_CODE)
        for i in range(USER_DATA_PAGES):
            map_page(USER_DATA_VA + i * PAGE_SIZE, USER_DATA_PA + i * PAGE_SIZE, PTE_LEAF_USER_DATA)
        for offset in range(0, PROTECTED_SIZE, PAGE_SIZE):
            map_page(PROTECTED_VA + offset, PROTECTED_PA + offset, PTE_LEAF_KERNEL_DATA)
        for offset in range(0, TASKLIST_SIZE, PAGE_SIZE):
            map_page(TASKLIST_VA + offset, TASKLIST_PA + offset, PTE_LEAF_KERNEL_DATA)

        def page(entries):
            return b''.join(e.to_bytes(8, 'little') for e in entries)

        return [Segment(PT_ROOT, page(root)), Segment(PT_L1, page(l1)), Segment(PT_L0, page(l0))]

    def _kernel_data(self, entries, scheduler, seed):
        """KDATA ヘッダ + タスクごとの TCB（slot 0 = sepc、slot 2 = sp）"""
        ntasks = len(entries)
        if not 1 <= ntasks <= MAX_TASKS or ntasks & (ntasks - 1):
            raise BuildError(f"Task count must be a power of two up to {MAX_TASKS}, got {ntasks}")
        data = bytearray(TCB_BASE - KDATA + ntasks * TCB_STRIDE)
        header = (0, ntasks, xorshift_seed(seed), scheduler)
        for i, value in enumerate(header):
            data[i * 8:i * 8 + 8] = value.to_bytes(8, 'little')
        stack_slice = USER_DATA_PAGES * PAGE_SIZE // 2 // ntasks
        for i, entry in enumerate(entries):
            base = TCB_BASE - KDATA + i * TCB_STRIDE
            data[base:base + 8] = entry.to_bytes(8, 'little')
            sp = USER_STACK_TOP - i * stack_slice
            data[base + 16:base + 24] = sp.to_bytes(8, 'little')
        return Segment(KDATA, bytes(data))

    def _task_list(self):
        """合成タスクリスト: init_task（pid、状態、名前）+ 番兵"""
        init_task = bytearray(INIT_TASK_SIZE)
        init_task[0:8] = (1).to_bytes(8, 'little')
        init_task[16:24] = b'init\x00\x00\x00\x00'
        init_task[24:32] = KDATA.to_bytes(8, 'little')
        return Segment(TASKLIST_PA, bytes(init_task) + SENTINEL_VALUE.to_bytes(8, 'little'))


# シングルトンインスタンス
guest_kit = GuestKit()


def build_scenario(params):
    return guest_kit.build_scenario(params)


def build_sweep_loop(bits, variant='reg'):
    return guest_kit.build_sweep_loop(bits, variant)
