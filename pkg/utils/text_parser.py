import re

from .constants import ABI_NAMES

# ================================================================================
# 📄 アセンブリテキスト解析ユーティリティ
# ================================================================================

_REGISTER_INDEX = {f'x{i}': i for i in range(32)}
_REGISTER_INDEX.update({name: i for i, name in enumerate(ABI_NAMES)})
_REGISTER_INDEX['fp'] = 8

_LABEL_RE = re.compile(r'^\s*([A-Za-z_.$][\w.$]*)\s*:')
_MEM_OPERAND_RE = re.compile(r'^(.*)\(\s*([A-Za-z0-9]+)\s*\)$')
_NUMBER_RE = re.compile(r'^[+-]?(0[xX][0-9a-fA-F_]+|0[bB][01_]+|\d[\d_]*)$')
SYMBOL_RE = re.compile(r'^[A-Za-z_.$][\w.$]*$')


def strip_comment(line):
    """コメント（# または //）を除去"""
    for marker in ('#', '//'):
        pos = line.find(marker)
        if pos >= 0:
            line = line[:pos]
    return line.strip()


def split_label(line):
    """行頭のラベルを切り出す -> (label or None, 残り)"""
    m = _LABEL_RE.match(line)
    if not m:
        return None, line.strip()
    return m.group(1), line[m.end():].strip()


def split_operands(text):
    """カンマ区切りのオペランドを分割"""
    if not text.strip():
        return []
    return [part.strip() for part in text.split(',')]


def parse_number(token):
    """数値リテラルを解析（10進 / 0x / 0b、符号付き）。数値でなければ None"""
    token = token.strip()
    if not _NUMBER_RE.match(token):
        return None
    return int(token.replace('_', ''), 0)


def parse_register(token):
    """レジスタ名を番号に変換。レジスタでなければ None"""
    return _REGISTER_INDEX.get(token.strip().lower())


def parse_mem_operand(token):
    """'imm(reg)' 形式を (imm 式, レジスタ番号) に分解"""
    m = _MEM_OPERAND_RE.match(token.strip())
    if not m:
        return None
    reg = parse_register(m.group(2))
    if reg is None:
        return None
    offset = m.group(1).strip() or '0'
    return offset, reg


def register_name(index):
    """レジスタ番号を正規表記（xN）に"""
    return f'x{index}'
