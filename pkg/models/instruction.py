from dataclasses import dataclass, field

# ================================================================================
# 🧾 命令モデル
# ================================================================================


@dataclass(frozen=True)
class Instruction:
    """デコード済み命令

    imm は符号付き 64 ビット値。Zicsr 命令では imm に CSR アドレスを、
    即値形式（csrrwi など）では rs1 に uimm を入れる。
    未使用フィールドは常に 0。raw は比較に含めない。
    """
    mnemonic: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    raw: int = field(default=0, compare=False)

    def __repr__(self):
        return (f"<Instruction {self.mnemonic} rd={self.rd} rs1={self.rs1} "
                f"rs2={self.rs2} imm={self.imm} raw=0x{self.raw:08x}>")
