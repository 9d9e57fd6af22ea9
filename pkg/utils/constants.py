# ================================================================================
# 📋 定数定義
# ================================================================================

MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1

# 特権モード（RISC-V のエンコーディング）
MODE_USER = 0
MODE_SUPERVISOR = 1
MODE_MACHINE = 3

# 物理メモリ / MMIO
MEM_BASE = 0x8000_0000
MMIO_EXIT = 0x1000_0000
MMIO_PUTCHAR = 0x1000_0008
CLINT_MTIMECMP = 0x0200_4000
CLINT_MTIME = 0x0200_BFF8

# トラップ要因コード（特権仕様の番号そのまま）
CAUSE_MISALIGNED_FETCH = 0
CAUSE_FETCH_ACCESS = 1
CAUSE_ILLEGAL_INSTRUCTION = 2
CAUSE_BREAKPOINT = 3
CAUSE_LOAD_ACCESS = 5
CAUSE_STORE_ACCESS = 7
CAUSE_ECALL_U = 8
CAUSE_ECALL_S = 9
CAUSE_ECALL_M = 11
CAUSE_FETCH_PAGE_FAULT = 12
CAUSE_LOAD_PAGE_FAULT = 13
CAUSE_STORE_PAGE_FAULT = 15

IRQ_SUPERVISOR_SOFTWARE = 1
IRQ_MACHINE_SOFTWARE = 3
IRQ_SUPERVISOR_TIMER = 5
IRQ_MACHINE_TIMER = 7
IRQ_SUPERVISOR_EXTERNAL = 9
IRQ_MACHINE_EXTERNAL = 11

# 割り込みの優先順位（高い順）
IRQ_PRIORITY = (
    IRQ_MACHINE_EXTERNAL, IRQ_MACHINE_SOFTWARE, IRQ_MACHINE_TIMER,
    IRQ_SUPERVISOR_EXTERNAL, IRQ_SUPERVISOR_SOFTWARE, IRQ_SUPERVISOR_TIMER,
)

CAUSE_NAMES = {
    CAUSE_MISALIGNED_FETCH: 'instruction_address_misaligned',
    CAUSE_FETCH_ACCESS: 'instruction_access_fault',
    CAUSE_ILLEGAL_INSTRUCTION: 'illegal_instruction',
    CAUSE_BREAKPOINT: 'breakpoint',
    CAUSE_LOAD_ACCESS: 'load_access_fault',
    CAUSE_STORE_ACCESS: 'store_access_fault',
    CAUSE_ECALL_U: 'ecall_from_u',
    CAUSE_ECALL_S: 'ecall_from_s',
    CAUSE_ECALL_M: 'ecall_from_m',
    CAUSE_FETCH_PAGE_FAULT: 'instruction_page_fault',
    CAUSE_LOAD_PAGE_FAULT: 'load_page_fault',
    CAUSE_STORE_PAGE_FAULT: 'store_page_fault',
}

# ================================================================================
# 🗂 CSR アドレス
# ================================================================================

CSR_ADDRESSES = {
    'sstatus': 0x100, 'sie': 0x104, 'stvec': 0x105,
    'sscratch': 0x140, 'sepc': 0x141, 'scause': 0x142, 'stval': 0x143, 'sip': 0x144,
    'satp': 0x180,
    'mstatus': 0x300, 'misa': 0x301, 'medeleg': 0x302, 'mideleg': 0x303,
    'mie': 0x304, 'mtvec': 0x305,
    'mscratch': 0x340, 'mepc': 0x341, 'mcause': 0x342, 'mtval': 0x343, 'mip': 0x344,
    'mcycle': 0xB00, 'minstret': 0xB02,
    'cycle': 0xC00, 'time': 0xC01, 'instret': 0xC02,
    'mhartid': 0xF14,
}
CSR_NAMES = {addr: name for name, addr in CSR_ADDRESSES.items()}

# mstatus のビット
MSTATUS_SIE = 1 << 1
MSTATUS_MIE = 1 << 3
MSTATUS_SPIE = 1 << 5
MSTATUS_MPIE = 1 << 7
MSTATUS_SPP = 1 << 8
MSTATUS_MPP_SHIFT = 11
MSTATUS_MPP = 3 << MSTATUS_MPP_SHIFT
MSTATUS_SUM = 1 << 18
MSTATUS_MXR = 1 << 19
MSTATUS_WRITABLE = (MSTATUS_SIE | MSTATUS_MIE | MSTATUS_SPIE | MSTATUS_MPIE
                    | MSTATUS_SPP | MSTATUS_MPP | MSTATUS_SUM | MSTATUS_MXR)
SSTATUS_MASK = MSTATUS_SIE | MSTATUS_SPIE | MSTATUS_SPP | MSTATUS_SUM | MSTATUS_MXR

# mie / mip のビット
MIP_SSIP = 1 << IRQ_SUPERVISOR_SOFTWARE
MIP_MSIP = 1 << IRQ_MACHINE_SOFTWARE
MIP_STIP = 1 << IRQ_SUPERVISOR_TIMER
MIP_MTIP = 1 << IRQ_MACHINE_TIMER
MIP_SEIP = 1 << IRQ_SUPERVISOR_EXTERNAL
MIP_MEIP = 1 << IRQ_MACHINE_EXTERNAL
MIE_WRITABLE = MIP_SSIP | MIP_MSIP | MIP_STIP | MIP_MTIP | MIP_SEIP | MIP_MEIP
MIP_WRITABLE = MIP_SSIP | MIP_STIP
SUPERVISOR_INTERRUPTS = MIP_SSIP | MIP_STIP | MIP_SEIP
MIDELEG_WRITABLE = SUPERVISOR_INTERRUPTS
MEDELEG_WRITABLE = 0xFFFF & ~(1 << CAUSE_ECALL_M)

# satp
SATP_MODE_SHIFT = 60
SATP_MODE_BARE = 0
SATP_MODE_SV39 = 8
SATP_PPN_MASK = (1 << 44) - 1

# misa: RV64 + I + S + U
MISA_VALUE = (2 << 62) | (1 << 8) | (1 << 18) | (1 << 20)

# ================================================================================
# 📄 Sv39
# ================================================================================

PAGE_SHIFT = 12
PAGE_SIZE = 1 << PAGE_SHIFT
PTE_SIZE = 8
SV39_LEVELS = 3
VPN_BITS = 9
VPN_MASK = (1 << VPN_BITS) - 1
PPN_MASK = (1 << 44) - 1

PTE_V = 1 << 0
PTE_R = 1 << 1
PTE_W = 1 << 2
PTE_X = 1 << 3
PTE_U = 1 << 4
PTE_G = 1 << 5
PTE_A = 1 << 6
PTE_D = 1 << 7

# ================================================================================
# 🧩 ゲストキット
# ================================================================================

SCENARIOS = ['kernel_cs', 'multitask', 'race', 'integrity', 'availability', 'sweep', 'baseline']
REFERENCE_KBYTES = [0.5, 1, 4, 16, 32]

# 終了コード（ゲストカーネルが MMIO_EXIT に書き込む値）
EXIT_OK = 0
EXIT_USER_FAULT = 2
EXIT_PANIC = 3
EXIT_FIRMWARE_FAULT = 4
EXIT_KERNEL_FAULT = 5

# システムコール番号
SYS_YIELD = 124
SYS_EXIT = 93

VERDICT_ATTACK_SUCCEEDS = 'AttackSucceeds'
VERDICT_STORE_FAULTS = 'StoreFaults'
VERDICT_KERNEL_PANIC = 'KernelPanicMarker'
VERDICT_RACE_OBSERVED = 'RaceObserved'
VERDICT_INCONCLUSIVE = 'Inconclusive'

# ABI レジスタ名
ABI_NAMES = ('zero,ra,sp,gp,tp,t0,t1,t2,s0,s1,a0,a1,a2,a3,a4,a5,a6,a7,'
             's2,s3,s4,s5,s6,s7,s8,s9,s10,s11,t3,t4,t5,t6').split(',')

# ================================================================================
# 🗺 ゲストのメモリマップ（物理アドレス / ユーザー VA）
# ================================================================================

BOOT_BASE = 0x8000_0000
MTRAP_BASE = 0x8000_1000
M_SAVE = 0x8000_1800
KERNEL_BASE = 0x8000_2000
KDATA = 0x8000_8000
TCB_BASE = KDATA + 0x100
TCB_STRIDE = 0x100
MAX_TASKS = 8

PT_ROOT = 0x8001_0000
PT_L1 = 0x8001_1000
PT_L0 = 0x8001_2000

TASK_VA = 0x0040_0000
TASK_PA = 0x8010_0000
USER_DATA_VA = 0x0041_0000
USER_DATA_PA = 0x8011_0000
USER_DATA_PAGES = 2
USER_STACK_TOP = USER_DATA_VA + USER_DATA_PAGES * PAGE_SIZE

PROTECTED_VA = 0x0050_0000
PROTECTED_PA = 0x8020_0000
PROTECTED_SIZE = 32 * 1024
TASKLIST_VA = 0x0050_8000
TASKLIST_PA = 0x8020_8000
TASKLIST_SIZE = 32 * 1024
INIT_TASK_SIZE = 0x40
SENTINEL_OFFSET = INIT_TASK_SIZE
SENTINEL_VALUE = 0x5441_534B_4C49_5354

SWEEP_BASE = 0x8010_0000
SWEEP_DATA = 0x8011_0000
SWEEP_MIN_BITS = 4
SWEEP_MAX_BITS = 32

FILL_VALUE = 0xDEAD_BEEF_0BAD_F00D

# カーネルの切り替え経路より短いタイムスライスはハンドリングプロセスを進ませない
MIN_QUANTUM = 400

# ストアループ 1 周（sd + addi + addi + bne）のおおよそのサイクル数
STORE_LOOP_CYCLES = 8
# quantum 省略時、攻撃中のストアループがこの数以上のスライスにまたがるよう縮める
ATTACK_SLICES = 4
