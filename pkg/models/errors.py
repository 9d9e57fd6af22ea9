# ================================================================================
# ❗ 例外クラス
# ================================================================================


class SimulatorError(Exception):
    """シミュレータ関連エラーの基底クラス"""


class IllegalInstruction(SimulatorError):
    """デコードできない命令語（呼び出し側がトラップ 2 に変換する）"""

    def __init__(self, word, reason='no matching encoding'):
        self.word = word & 0xFFFFFFFF
        super().__init__(f"Illegal instruction 0x{self.word:08x}: {reason}")


class Timeout(SimulatorError):
    """max_cycles に達しても終了しなかった"""

    def __init__(self, cycles, summary=None):
        self.cycles = cycles
        self.summary = summary
        super().__init__(f"Run did not finish within {cycles} cycles")


class AsmError(SimulatorError):
    """アセンブルエラー（行番号付き）"""

    def __init__(self, line_no, message):
        self.line_no = line_no
        self.message = message
        super().__init__(f"line {line_no}: {message}")


class BuildError(SimulatorError):
    """シナリオ構築エラー"""


class DegenerateFit(SimulatorError):
    """スイープの回帰が退化している"""


class ConfigError(SimulatorError):
    """設定値が不正"""


class ManifestError(SimulatorError):
    """メモリイメージのマニフェストが不正"""


class Trap(Exception):
    """アーキテクチャ上の例外（エンジン内部でのみ使用し、step でトラップに変換）"""

    def __init__(self, code, tval=0):
        self.code = code
        self.tval = tval
        super().__init__(f"trap cause={code} tval=0x{tval:x}")
