# -*- coding: utf-8 -*-

"""
================================================================================
🛠 services/assembler.py - 2 パスアセンブラ
================================================================================

パス 1 で .org を考慮してラベルのアドレスを確定し、パス 2 でエンコードする。
li の展開長は値で変わるため、パス 1 で値が確定しない li は 8 語を確保し、
余りを nop で埋める。リロケーションはなく、すべて絶対アドレス。
分岐 / ジャンプの数値オペランドは絶対アドレスとして扱う（逆アセンブラの出力と対称）。
"""

import re

from models.errors import AsmError, ManifestError
from models.instruction import Instruction
from models.memory_image import MemoryImage, Segment
from services.isa import OPCODES, FORMATS, encode, sign_extend, fits_signed, FENCE_BITS
from utils import logger
from utils.constants import CSR_ADDRESSES, MASK64
from utils.text_parser import (
    strip_comment, split_label, split_operands, parse_number, parse_register, parse_mem_operand,
    SYMBOL_RE,
)

LI_MAX_WORDS = 8
NOP = Instruction('addi')

_TERM_RE = re.compile(r'\s*([+-])?\s*([^+\-\s]+)\s*')

BRANCH_ALIASES = {
    'beqz': ('beq', False), 'bnez': ('bne', False), 'bltz': ('blt', False), 'bgez': ('bge', False),
    'blez': ('bge', True), 'bgtz': ('blt', True),
}
SWAPPED_BRANCHES = {'bgt': 'blt', 'ble': 'bge', 'bgtu': 'bltu', 'bleu': 'bgeu'}
CSR_ALIASES = {'csrr': None, 'csrw': 'csrrw', 'csrs': 'csrrs', 'csrc': 'csrrc',
               'csrwi': 'csrrwi', 'csrsi': 'csrrsi', 'csrci': 'csrrci'}


class Unresolved(Exception):
    """パス 1 でまだ値の決まらないシンボル"""


# ================================================================================
# 🔢 li の展開
# ================================================================================

def li_sequence(rd, value):
    """64 ビット定数を rd にロードする命令列（再帰的な上位/下位分割）"""
    value &= MASK64
    if value >> 63:
        value -= 1 << 64

    if fits_signed(value, 32):
        hi = ((value + 0x800) >> 12) & 0xFFFFF
        lo = sign_extend(value, 12)
        if not hi:
            return [Instruction('addi', rd=rd, imm=lo)]
        seq = [Instruction('lui', rd=rd, imm=sign_extend(hi << 12, 32))]
        if lo:
            seq.append(Instruction('addiw', rd=rd, rs1=rd, imm=lo))
        return seq

    lo = sign_extend(value, 12)
    hi = (value - lo) >> 12
    shift = 12
    while not hi & 1:
        hi >>= 1
        shift += 1
    hi = sign_extend(hi, 64 - shift)
    seq = li_sequence(rd, hi)
    seq.append(Instruction('slli', rd=rd, rs1=rd, imm=shift))
    if lo:
        seq.append(Instruction('addi', rd=rd, rs1=rd, imm=lo))
    return seq


# ================================================================================
# 🛠 アセンブラ
# ================================================================================

class _Item:
    """パス 1 で配置が決まった 1 行分"""
    __slots__ = ('line_no', 'addr', 'size', 'kind', 'name', 'operands')

    def __init__(self, line_no, addr, size, kind, name, operands):
        self.line_no = line_no
        self.addr = addr
        self.size = size
        self.kind = kind
        self.name = name
        self.operands = operands


class Assembler:
    """状態を持たないので並列に呼んでよい（作業状態は呼び出しごとのローカル）"""

    # ------------------------------------------------------------------
    # 公開 API
    # ------------------------------------------------------------------
    def assemble(self, source, origin=0):
        """ソーステキスト -> MemoryImage"""
        symbols = {}
        labels = {}
        items, starts, entry_expr = self._pass1(source, origin, symbols, labels)
        chunks = self._pass2(items, symbols)
        image = self._build_image(chunks, starts, labels, symbols, entry_expr)
        logger.debug(f"🛠 Assembled {len(items)} items into {len(image.segments)} segments")
        return image

    def assemble_file(self, path, origin=0):
        with open(path, 'r', encoding='utf-8') as f:
            return self.assemble(f.read(), origin)

    # ------------------------------------------------------------------
    # パス 1: アドレス確定
    # ------------------------------------------------------------------
    def _pass1(self, source, origin, symbols, labels):
        pc = origin
        items = []
        starts = [(origin, 1)]
        entry_expr = None

        for line_no, raw in enumerate(source.splitlines(), start=1):
            text = strip_comment(raw)
            while True:
                label, rest = split_label(text)
                if label is None:
                    break
                if label in symbols:
                    raise AsmError(line_no, f"duplicate label '{label}'")
                symbols[label] = pc
                labels[label] = pc
                text = rest
            if not text:
                continue

            parts = text.split(None, 1)
            name = parts[0].lower()
            operands = split_operands(parts[1]) if len(parts) > 1 else []

            if name.startswith('.'):
                if name == '.org':
                    pc = self._eval_now(operands, 0, symbols, line_no, pc)
                    starts.append((pc, line_no))
                elif name == '.equ' or name == '.set':
                    if len(operands) != 2 or not SYMBOL_RE.match(operands[0]):
                        raise AsmError(line_no, ".equ expects a name and a value")
                    if operands[0] in symbols:
                        raise AsmError(line_no, f"duplicate symbol '{operands[0]}'")
                    try:
                        symbols[operands[0]] = self.eval_expr(operands[1], symbols, pc)
                    except Unresolved:
                        items.append(_Item(line_no, pc, 0, 'equ', operands[0], operands[1:]))
                elif name in ('.dword', '.word', '.byte'):
                    width = {'.dword': 8, '.word': 4, '.byte': 1}[name]
                    items.append(_Item(line_no, pc, width * len(operands), 'data', name, operands))
                    pc += width * len(operands)
                elif name == '.zero' or name == '.space':
                    size = self._eval_now(operands, 0, symbols, line_no, pc)
                    if size < 0:
                        raise AsmError(line_no, f"negative size {size}")
                    items.append(_Item(line_no, pc, size, 'zero', name, operands))
                    pc += size
                elif name == '.align':
                    align = 1 << self._eval_now(operands, 0, symbols, line_no, pc)
                    pad = (-pc) % align
                    items.append(_Item(line_no, pc, pad, 'zero', name, operands))
                    pc += pad
                elif name == '.entry':
                    entry_expr = (line_no, operands[0] if operands else '')
                elif name in ('.global', '.globl', '.text', '.data', '.section'):
                    pass
                else:
                    raise AsmError(line_no, f"unknown directive '{name}'")
                continue

            size = self._instruction_size(name, operands, symbols, line_no, pc)
            items.append(_Item(line_no, pc, size, 'ins', name, operands))
            pc += size

        return items, starts, entry_expr

    def _instruction_size(self, name, operands, symbols, line_no, pc):
        if name == 'li':
            if len(operands) != 2:
                raise AsmError(line_no, "li expects rd, imm")
            try:
                value = self.eval_expr(operands[1], symbols, pc)
            except Unresolved:
                return 4 * LI_MAX_WORDS
            return 4 * len(li_sequence(0, value))
        if name == 'la':
            return 8
        if name in OPCODES or name in _PSEUDO_SINGLE:
            return 4
        raise AsmError(line_no, f"unknown mnemonic '{name}'")

    def _eval_now(self, operands, index, symbols, line_no, pc):
        if len(operands) <= index:
            raise AsmError(line_no, "missing operand")
        try:
            return self.eval_expr(operands[index], symbols, pc)
        except Unresolved as e:
            raise AsmError(line_no, f"symbol '{e}' must be defined before use here")

    # ------------------------------------------------------------------
    # パス 2: エンコード
    # ------------------------------------------------------------------
    def _pass2(self, items, symbols):
        for item in items:
            if item.kind == 'equ':
                try:
                    symbols[item.name] = self.eval_expr(item.operands[0], symbols, item.addr)
                except Unresolved as e:
                    raise AsmError(item.line_no, f"undefined symbol '{e}'")

        chunks = []
        for item in items:
            if item.kind == 'equ':
                continue
            try:
                payload = self._emit(item, symbols)
            except Unresolved as e:
                raise AsmError(item.line_no, f"undefined symbol '{e}'")
            except ValueError as e:
                raise AsmError(item.line_no, str(e))
            chunks.append((item.addr, payload, item.line_no))
        return chunks

    def _emit(self, item, symbols):
        if item.kind == 'zero':
            return bytes(item.size)
        if item.kind == 'data':
            width = {'.dword': 8, '.word': 4, '.byte': 1}[item.name]
            out = bytearray()
            for op in item.operands:
                value = self.eval_expr(op, symbols, item.addr)
                if not -(1 << (8 * width - 1)) <= value < (1 << (8 * width)):
                    raise ValueError(f"value {value} does not fit in {item.name}")
                out += (value & ((1 << (8 * width)) - 1)).to_bytes(width, 'little')
            return bytes(out)

        seq = self.expand(item.name, item.operands, symbols, item.addr, item.line_no)
        words = [encode(ins) for ins in seq]
        if len(words) * 4 > item.size:
            raise AsmError(item.line_no, f"{item.name} expanded beyond its reserved size")
        words += [encode(NOP)] * (item.size // 4 - len(words))
        return b''.join(w.to_bytes(4, 'little') for w in words)

    # ------------------------------------------------------------------
    # 命令 / 疑似命令の展開
    # ------------------------------------------------------------------
    def expand(self, name, ops, symbols, pc, line_no=0):
        """ニーモニックとオペランドから Instruction の列を作る"""
        reg = lambda text: self._reg(text, line_no)
        val = lambda text: self.eval_expr(text, symbols, pc)
        target = lambda text: val(text) - pc

        def want(n):
            if len(ops) != n:
                raise AsmError(line_no, f"{name} expects {n} operands, got {len(ops)}")

        # --- 疑似命令 ---
        if name == 'nop':
            want(0)
            return [NOP]
        if name == 'li':
            want(2)
            return li_sequence(reg(ops[0]), val(ops[1]))
        if name == 'la':
            want(2)
            rd = reg(ops[0])
            offset = val(ops[1]) - pc
            hi = (offset + 0x800) >> 12
            lo = offset - (hi << 12)
            if not fits_signed(hi, 20):
                raise ValueError(f"la: target out of auipc range ({offset:#x})")
            return [Instruction('auipc', rd=rd, imm=sign_extend((hi & 0xFFFFF) << 12, 32)),
                    Instruction('addi', rd=rd, rs1=rd, imm=lo)]
        if name == 'mv':
            want(2)
            return [Instruction('addi', rd=reg(ops[0]), rs1=reg(ops[1]))]
        if name == 'not':
            want(2)
            return [Instruction('xori', rd=reg(ops[0]), rs1=reg(ops[1]), imm=-1)]
        if name == 'neg':
            want(2)
            return [Instruction('sub', rd=reg(ops[0]), rs2=reg(ops[1]))]
        if name == 'seqz':
            want(2)
            return [Instruction('sltiu', rd=reg(ops[0]), rs1=reg(ops[1]), imm=1)]
        if name == 'snez':
            want(2)
            return [Instruction('sltu', rd=reg(ops[0]), rs2=reg(ops[1]))]
        if name == 'sext.w':
            want(2)
            return [Instruction('addiw', rd=reg(ops[0]), rs1=reg(ops[1]))]
        if name == 'j':
            want(1)
            return [Instruction('jal', imm=target(ops[0]))]
        if name == 'call':
            want(1)
            return [Instruction('jal', rd=1, imm=target(ops[0]))]
        if name == 'jr':
            want(1)
            return [Instruction('jalr', rs1=reg(ops[0]))]
        if name == 'ret':
            want(0)
            return [Instruction('jalr', rs1=1)]
        if name in BRANCH_ALIASES:
            want(2)
            base, swap = BRANCH_ALIASES[name]
            rs = reg(ops[0])
            rs1, rs2 = (0, rs) if swap else (rs, 0)
            return [Instruction(base, rs1=rs1, rs2=rs2, imm=target(ops[1]))]
        if name in SWAPPED_BRANCHES:
            want(3)
            return [Instruction(SWAPPED_BRANCHES[name], rs1=reg(ops[1]), rs2=reg(ops[0]),
                                imm=target(ops[2]))]
        if name in CSR_ALIASES:
            if name == 'csrr':
                want(2)
                return [Instruction('csrrs', rd=reg(ops[0]), imm=self._csr(ops[1], symbols, line_no))]
            want(2)
            base = CSR_ALIASES[name]
            source = self._uimm(val(ops[1])) if base.endswith('i') else reg(ops[1])
            return [Instruction(base, rs1=source, imm=self._csr(ops[0], symbols, line_no))]

        # --- 実命令 ---
        fmt = FORMATS.get(name)
        if fmt is None:
            raise AsmError(line_no, f"unknown mnemonic '{name}'")
        if fmt == 'FIXED':
            want(0)
            return [Instruction(name)]
        if fmt == 'R':
            want(3)
            return [Instruction(name, rd=reg(ops[0]), rs1=reg(ops[1]), rs2=reg(ops[2]))]
        if fmt == 'I' and name == 'jalr':
            if len(ops) == 1:
                return [Instruction(name, rd=1, rs1=reg(ops[0]))]
            if len(ops) == 3:
                return [Instruction(name, rd=reg(ops[0]), rs1=reg(ops[1]), imm=val(ops[2]))]
            want(2)
            offset, base = self._mem(ops[1], symbols, pc, line_no)
            return [Instruction(name, rd=reg(ops[0]), rs1=base, imm=offset)]
        if fmt == 'I' and OPCODES[name][1] == 0x03:
            want(2)
            offset, base = self._mem(ops[1], symbols, pc, line_no)
            return [Instruction(name, rd=reg(ops[0]), rs1=base, imm=offset)]
        if fmt in ('I', 'SH', 'SHW'):
            want(3)
            return [Instruction(name, rd=reg(ops[0]), rs1=reg(ops[1]), imm=val(ops[2]))]
        if fmt == 'S':
            want(2)
            offset, base = self._mem(ops[1], symbols, pc, line_no)
            return [Instruction(name, rs1=base, rs2=reg(ops[0]), imm=offset)]
        if fmt == 'B':
            want(3)
            return [Instruction(name, rs1=reg(ops[0]), rs2=reg(ops[1]), imm=target(ops[2]))]
        if fmt == 'J':
            if len(ops) == 1:
                return [Instruction(name, rd=1, imm=target(ops[0]))]
            want(2)
            return [Instruction(name, rd=reg(ops[0]), imm=target(ops[1]))]
        if fmt == 'U':
            want(2)
            upper = val(ops[1])
            if not -(1 << 19) <= upper <= 0xFFFFF:
                raise ValueError(f"{name}: immediate {upper:#x} does not fit in 20 bits")
            return [Instruction(name, rd=reg(ops[0]), imm=sign_extend((upper & 0xFFFFF) << 12, 32))]
        if fmt == 'FENCE':
            if not ops:
                return [Instruction(name, imm=0xFF)]
            want(2)
            return [Instruction(name, imm=self._fence_set(ops[0], line_no) << 4
                                | self._fence_set(ops[1], line_no))]
        if fmt == 'SFENCE':
            if len(ops) > 2:
                raise AsmError(line_no, "sfence.vma takes at most 2 operands")
            regs = [reg(op) for op in ops] + [0] * (2 - len(ops))
            return [Instruction(name, rs1=regs[0], rs2=regs[1])]
        if fmt == 'CSR':
            want(3)
            return [Instruction(name, rd=reg(ops[0]), imm=self._csr(ops[1], symbols, line_no),
                                rs1=reg(ops[2]))]
        want(3)
        return [Instruction(name, rd=reg(ops[0]), imm=self._csr(ops[1], symbols, line_no),
                            rs1=self._uimm(val(ops[2])))]

    # ------------------------------------------------------------------
    # オペランド解析
    # ------------------------------------------------------------------
    def eval_expr(self, text, symbols, pc=0):
        """数値 / シンボル / '.' の +- 連鎖を評価。未定義シンボルは Unresolved"""
        text = text.strip()
        if not text:
            raise ValueError("empty expression")
        total = 0
        pos = 0
        first = True
        while pos < len(text):
            m = _TERM_RE.match(text, pos)
            if not m or (m.group(1) is None and not first):
                raise ValueError(f"cannot parse expression '{text}'")
            sign = -1 if m.group(1) == '-' else 1
            token = m.group(2)
            value = parse_number(token)
            if value is None:
                if token == '.':
                    value = pc
                elif SYMBOL_RE.match(token):
                    if token not in symbols:
                        raise Unresolved(token)
                    value = symbols[token]
                else:
                    raise ValueError(f"bad term '{token}' in expression '{text}'")
            total += sign * value
            pos = m.end()
            first = False
        return total

    def _reg(self, text, line_no):
        index = parse_register(text)
        if index is None:
            raise AsmError(line_no, f"bad register '{text}'")
        return index

    def _mem(self, text, symbols, pc, line_no):
        parsed = parse_mem_operand(text)
        if parsed is None:
            raise AsmError(line_no, f"expected offset(register), got '{text}'")
        offset_expr, base = parsed
        return self.eval_expr(offset_expr, symbols, pc), base

    def _csr(self, text, symbols, line_no):
        name = text.strip().lower()
        if name in CSR_ADDRESSES:
            return CSR_ADDRESSES[name]
        value = parse_number(name)
        if value is None and name in symbols:
            value = symbols[name]
        if value is None or not 0 <= value <= 0xFFF:
            raise AsmError(line_no, f"bad CSR '{text}'")
        return value

    def _uimm(self, value):
        if not 0 <= value <= 31:
            raise ValueError(f"CSR immediate {value} outside 0..31")
        return value

    def _fence_set(self, text, line_no):
        text = text.strip().lower()
        if text == '0':
            return 0
        bits = 0
        for c in text:
            if c not in FENCE_BITS:
                raise AsmError(line_no, f"bad fence set '{text}'")
            bits |= 1 << (3 - FENCE_BITS.index(c))
        return bits

    # ------------------------------------------------------------------
    # イメージ組み立て
    # ------------------------------------------------------------------
    def _build_image(self, chunks, starts, labels, symbols, entry_expr):
        segments = []
        current_addr, current, current_line = None, bytearray(), 0
        for addr, payload, line_no in chunks:
            if current_addr is not None and addr == current_addr + len(current):
                current += payload
                continue
            if current:
                segments.append((current_addr, bytes(current), current_line))
            current_addr, current, current_line = addr, bytearray(payload), line_no
        if current:
            segments.append((current_addr, bytes(current), current_line))

        ordered = sorted(segments, key=lambda s: s[0])
        for prev, cur in zip(ordered, ordered[1:]):
            if cur[0] < prev[0] + len(prev[1]):
                raise AsmError(max(prev[2], cur[2]),
                               f"overlapping segments at 0x{cur[0]:x} and 0x{prev[0]:x}")

        if entry_expr is not None:
            line_no, expr = entry_expr
            try:
                entry = self.eval_expr(expr, symbols)
            except (Unresolved, ValueError) as e:
                raise AsmError(line_no, f"bad entry '{expr}': {e}")
        elif '_start' in labels:
            entry = labels['_start']
        else:
            entry = ordered[0][0] if ordered else starts[0][0]

        try:
            return MemoryImage([Segment(a, d) for a, d, _ in ordered], entry, dict(labels))
        except ManifestError as e:
            raise AsmError(0, str(e))


_PSEUDO_SINGLE = {
    'nop', 'mv', 'not', 'neg', 'seqz', 'snez', 'sext.w', 'j', 'call', 'jr', 'ret',
    *BRANCH_ALIASES, *SWAPPED_BRANCHES, *CSR_ALIASES,
}

# シングルトンインスタンス
assembler = Assembler()
