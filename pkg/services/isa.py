# -*- coding: utf-8 -*-

"""
================================================================================
🧾 services/isa.py - RV64I + Zicsr のエンコード / デコード / 逆アセンブル
================================================================================

サポートする命令は OPCODES 表がすべて。decode は表にない語を
IllegalInstruction にする（呼び出し側がトラップ 2 に変換する）。
分岐・ジャンプの imm は pc 相対のオフセット、U 形式の imm は
符号拡張済みの (imm20 << 12) を保持する。
"""

from functools import lru_cache

from models.errors import IllegalInstruction
from models.instruction import Instruction
from utils.constants import CSR_NAMES

# ================================================================================
# 📋 命令表
# ================================================================================

# mnemonic -> (形式, opcode, funct3, funct7 / funct6)
OPCODES = {
    'lui': ('U', 0x37, None, None),
    'auipc': ('U', 0x17, None, None),
    'jal': ('J', 0x6F, None, None),
    'jalr': ('I', 0x67, 0, None),

    'beq': ('B', 0x63, 0, None), 'bne': ('B', 0x63, 1, None),
    'blt': ('B', 0x63, 4, None), 'bge': ('B', 0x63, 5, None),
    'bltu': ('B', 0x63, 6, None), 'bgeu': ('B', 0x63, 7, None),

    'lb': ('I', 0x03, 0, None), 'lh': ('I', 0x03, 1, None), 'lw': ('I', 0x03, 2, None),
    'ld': ('I', 0x03, 3, None), 'lbu': ('I', 0x03, 4, None), 'lhu': ('I', 0x03, 5, None),
    'lwu': ('I', 0x03, 6, None),

    'sb': ('S', 0x23, 0, None), 'sh': ('S', 0x23, 1, None),
    'sw': ('S', 0x23, 2, None), 'sd': ('S', 0x23, 3, None),

    'addi': ('I', 0x13, 0, None), 'slti': ('I', 0x13, 2, None), 'sltiu': ('I', 0x13, 3, None),
    'xori': ('I', 0x13, 4, None), 'ori': ('I', 0x13, 6, None), 'andi': ('I', 0x13, 7, None),
    'slli': ('SH', 0x13, 1, 0x00), 'srli': ('SH', 0x13, 5, 0x00), 'srai': ('SH', 0x13, 5, 0x10),

    'add': ('R', 0x33, 0, 0x00), 'sub': ('R', 0x33, 0, 0x20), 'sll': ('R', 0x33, 1, 0x00),
    'slt': ('R', 0x33, 2, 0x00), 'sltu': ('R', 0x33, 3, 0x00), 'xor': ('R', 0x33, 4, 0x00),
    'srl': ('R', 0x33, 5, 0x00), 'sra': ('R', 0x33, 5, 0x20), 'or': ('R', 0x33, 6, 0x00),
    'and': ('R', 0x33, 7, 0x00),

    'addiw': ('I', 0x1B, 0, None),
    'slliw': ('SHW', 0x1B, 1, 0x00), 'srliw': ('SHW', 0x1B, 5, 0x00), 'sraiw': ('SHW', 0x1B, 5, 0x20),

    'addw': ('R', 0x3B, 0, 0x00), 'subw': ('R', 0x3B, 0, 0x20), 'sllw': ('R', 0x3B, 1, 0x00),
    'srlw': ('R', 0x3B, 5, 0x00), 'sraw': ('R', 0x3B, 5, 0x20),

    'fence': ('FENCE', 0x0F, 0, None),
    'fence.i': ('FIXED', 0x0000100F, None, None),

    'ecall': ('FIXED', 0x00000073, None, None),
    'ebreak': ('FIXED', 0x00100073, None, None),
    'sret': ('FIXED', 0x10200073, None, None),
    'mret': ('FIXED', 0x30200073, None, None),
    'wfi': ('FIXED', 0x10500073, None, None),
    'sfence.vma': ('SFENCE', 0x73, 0, 0x09),

    'csrrw': ('CSR', 0x73, 1, None), 'csrrs': ('CSR', 0x73, 2, None), 'csrrc': ('CSR', 0x73, 3, None),
    'csrrwi': ('CSRI', 0x73, 5, None), 'csrrsi': ('CSRI', 0x73, 6, None), 'csrrci': ('CSRI', 0x73, 7, None),
}

FORMATS = {name: spec[0] for name, spec in OPCODES.items()}

_BY_FIELDS = {}
_FIXED = {}
for _name, (_fmt, _op, _f3, _f7) in OPCODES.items():
    if _fmt == 'FIXED':
        _FIXED[_op] = _name
    else:
        _BY_FIELDS[(_op, _f3, _f7)] = _name

LOAD_STORE = {'lb', 'lh', 'lw', 'ld', 'lbu', 'lhu', 'lwu', 'sb', 'sh', 'sw', 'sd', 'jalr'}


def sign_extend(value, bits):
    """bits ビットの値を符号拡張"""
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


def fits_signed(value, bits):
    return -(1 << (bits - 1)) <= value < (1 << (bits - 1))


# ================================================================================
# 🔍 デコード
# ================================================================================

@lru_cache(maxsize=None)
def decode(word):
    """32 ビット命令語を Instruction に。サポート外は IllegalInstruction"""
    word &= 0xFFFFFFFF
    if word in _FIXED:
        return Instruction(_FIXED[word], raw=word)

    opcode = word & 0x7F
    rd = (word >> 7) & 0x1F
    funct3 = (word >> 12) & 0x7
    rs1 = (word >> 15) & 0x1F
    rs2 = (word >> 20) & 0x1F
    funct7 = word >> 25

    if opcode in (0x37, 0x17):
        name = 'lui' if opcode == 0x37 else 'auipc'
        return Instruction(name, rd=rd, imm=sign_extend(word & 0xFFFFF000, 32), raw=word)

    if opcode == 0x6F:
        imm = (((word >> 31) & 1) << 20 | ((word >> 12) & 0xFF) << 12
               | ((word >> 20) & 1) << 11 | ((word >> 21) & 0x3FF) << 1)
        return Instruction('jal', rd=rd, imm=sign_extend(imm, 21), raw=word)

    if opcode == 0x63:
        name = _lookup(word, opcode, funct3, None)
        imm = (((word >> 31) & 1) << 12 | ((word >> 7) & 1) << 11
               | ((word >> 25) & 0x3F) << 5 | ((word >> 8) & 0xF) << 1)
        return Instruction(name, rs1=rs1, rs2=rs2, imm=sign_extend(imm, 13), raw=word)

    if opcode == 0x23:
        name = _lookup(word, opcode, funct3, None)
        imm = (funct7 << 5) | rd
        return Instruction(name, rs1=rs1, rs2=rs2, imm=sign_extend(imm, 12), raw=word)

    if opcode in (0x33, 0x3B):
        name = _lookup(word, opcode, funct3, funct7)
        return Instruction(name, rd=rd, rs1=rs1, rs2=rs2, raw=word)

    if opcode == 0x13 and funct3 in (1, 5):
        name = _lookup(word, opcode, funct3, word >> 26)
        return Instruction(name, rd=rd, rs1=rs1, imm=(word >> 20) & 0x3F, raw=word)

    if opcode == 0x1B and funct3 in (1, 5):
        name = _lookup(word, opcode, funct3, funct7)
        return Instruction(name, rd=rd, rs1=rs1, imm=rs2, raw=word)

    if opcode in (0x03, 0x13, 0x1B, 0x67):
        name = _lookup(word, opcode, funct3, None)
        return Instruction(name, rd=rd, rs1=rs1, imm=sign_extend(word >> 20, 12), raw=word)

    if opcode == 0x0F:
        # fm は 0 のみ、rd / rs1 は予約で 0
        if funct3 != 0 or rd or rs1 or (word >> 28):
            raise IllegalInstruction(word, 'unsupported fence encoding')
        return Instruction('fence', imm=(word >> 20) & 0xFF, raw=word)

    if opcode == 0x73:
        if funct3 == 0:
            if funct7 == 0x09 and rd == 0:
                return Instruction('sfence.vma', rs1=rs1, rs2=rs2, raw=word)
            raise IllegalInstruction(word, 'unsupported system encoding')
        name = _lookup(word, opcode, funct3, None)
        return Instruction(name, rd=rd, rs1=rs1, imm=word >> 20, raw=word)

    raise IllegalInstruction(word)


def _lookup(word, opcode, funct3, funct7):
    name = _BY_FIELDS.get((opcode, funct3, funct7))
    if name is None:
        raise IllegalInstruction(word)
    return name


# ================================================================================
# 🔧 エンコード
# ================================================================================

def encode(ins):
    """Instruction を 32 ビット命令語に。範囲外の即値は ValueError"""
    name = ins.mnemonic
    if name not in OPCODES:
        raise ValueError(f"Unknown mnemonic: {name}")
    fmt, opcode, funct3, funct7 = OPCODES[name]
    rd, rs1, rs2, imm = ins.rd, ins.rs1, ins.rs2, ins.imm
    for reg in (rd, rs1, rs2):
        if not 0 <= reg < 32:
            raise ValueError(f"Register index out of range: {reg}")

    if fmt == 'FIXED':
        return opcode
    if fmt == 'R':
        return funct7 << 25 | rs2 << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
    if fmt == 'I':
        _check_signed(imm, 12, name)
        return (imm & 0xFFF) << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
    if fmt == 'SH':
        _check_range(imm, 0, 63, name)
        return funct7 << 26 | imm << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
    if fmt == 'SHW':
        _check_range(imm, 0, 31, name)
        return funct7 << 25 | imm << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
    if fmt == 'S':
        _check_signed(imm, 12, name)
        imm &= 0xFFF
        return (imm >> 5) << 25 | rs2 << 20 | rs1 << 15 | funct3 << 12 | (imm & 0x1F) << 7 | opcode
    if fmt == 'B':
        _check_signed(imm, 13, name)
        if imm & 1:
            raise ValueError(f"{name}: branch offset must be even, got {imm}")
        imm &= 0x1FFF
        return (((imm >> 12) & 1) << 31 | ((imm >> 5) & 0x3F) << 25 | rs2 << 20 | rs1 << 15
                | funct3 << 12 | ((imm >> 1) & 0xF) << 8 | ((imm >> 11) & 1) << 7 | opcode)
    if fmt == 'U':
        if imm & 0xFFF or not fits_signed(imm, 32):
            raise ValueError(f"{name}: immediate 0x{imm & 0xFFFFFFFF:x} is not a 20-bit upper value")
        return (imm & 0xFFFFF000) | rd << 7 | opcode
    if fmt == 'J':
        _check_signed(imm, 21, name)
        if imm & 1:
            raise ValueError(f"{name}: jump offset must be even, got {imm}")
        imm &= 0x1FFFFF
        return (((imm >> 20) & 1) << 31 | ((imm >> 1) & 0x3FF) << 21 | ((imm >> 11) & 1) << 20
                | ((imm >> 12) & 0xFF) << 12 | rd << 7 | opcode)
    if fmt == 'FENCE':
        _check_range(imm, 0, 0xFF, name)
        return imm << 20 | opcode
    if fmt == 'SFENCE':
        return funct7 << 25 | rs2 << 20 | rs1 << 15 | opcode
    if fmt in ('CSR', 'CSRI'):
        _check_range(imm, 0, 0xFFF, name)
        return imm << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
    raise ValueError(f"Unhandled format {fmt}")


def _check_signed(imm, bits, name):
    if not fits_signed(imm, bits):
        raise ValueError(f"{name}: immediate {imm} does not fit in {bits}-bit signed field")


def _check_range(imm, lo, hi, name):
    if not lo <= imm <= hi:
        raise ValueError(f"{name}: immediate {imm} outside {lo}..{hi}")


# ================================================================================
# 📜 逆アセンブル
# ================================================================================

FENCE_BITS = 'iorw'


def fence_set(bits):
    text = ''.join(c for i, c in enumerate(FENCE_BITS) if bits & (1 << (3 - i)))
    return text or '0'


def csr_name(addr):
    return CSR_NAMES.get(addr, f'0x{addr:x}')


def disassemble(word, addr=0):
    """命令語をテキストに。分岐先は絶対アドレス、未サポート語は .word"""
    try:
        ins = decode(word)
    except IllegalInstruction:
        return f'.word 0x{word & 0xFFFFFFFF:08x}'
    return format_instruction(ins, addr)


def format_instruction(ins, addr=0):
    name = ins.mnemonic
    fmt = FORMATS[name]
    rd, rs1, rs2 = f'x{ins.rd}', f'x{ins.rs1}', f'x{ins.rs2}'
    if fmt == 'FIXED':
        return name
    if fmt == 'R':
        return f'{name} {rd}, {rs1}, {rs2}'
    if fmt == 'I':
        if name in LOAD_STORE:
            return f'{name} {rd}, {ins.imm}({rs1})'
        return f'{name} {rd}, {rs1}, {ins.imm}'
    if fmt in ('SH', 'SHW'):
        return f'{name} {rd}, {rs1}, {ins.imm}'
    if fmt == 'S':
        return f'{name} {rs2}, {ins.imm}({rs1})'
    if fmt == 'B':
        return f'{name} {rs1}, {rs2}, 0x{(addr + ins.imm) & ((1 << 64) - 1):x}'
    if fmt == 'J':
        return f'{name} {rd}, 0x{(addr + ins.imm) & ((1 << 64) - 1):x}'
    if fmt == 'U':
        return f'{name} {rd}, 0x{(ins.imm >> 12) & 0xFFFFF:x}'
    if fmt == 'FENCE':
        return f'fence {fence_set(ins.imm >> 4)}, {fence_set(ins.imm & 0xF)}'
    if fmt == 'SFENCE':
        return f'sfence.vma {rs1}, {rs2}'
    if fmt == 'CSR':
        return f'{name} {rd}, {csr_name(ins.imm)}, {rs1}'
    return f'{name} {rd}, {csr_name(ins.imm)}, {ins.rs1}'
