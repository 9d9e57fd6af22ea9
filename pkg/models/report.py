from dataclasses import dataclass, field

from models.machine import MODE_ORDER

# ================================================================================
# 📊 実行サマリと実験レポート
# ================================================================================

CSV_HEADER = ('kbytes', 'user', 'supervisor', 'machine', 'suppressed', 'verdict')
SWEEP_CSV_HEADER = ('bits', 'instruction_count', 'simulated_cycles')


def mode_counts(counter):
    """PrivilegeMode キーの dict を固定順の名前付き dict に"""
    return {mode.name: counter.get(mode, 0) for mode in MODE_ORDER}


@dataclass
class RunSummary:
    """run() の結果（タイムスタンプを含まないので決定的にシリアライズできる）"""
    stop_reason: str
    exit_code: int
    cycles: int
    instret: int
    mode_entries: dict
    mode_cycles: dict
    payload: dict
    digest: str
    memory_digest: str
    faults: list = field(default_factory=list)
    console: str = ''

    def to_dict(self):
        return {
            'stop_reason': self.stop_reason,
            'exit_code': self.exit_code,
            'cycles': self.cycles,
            'instret': self.instret,
            'mode_entries': dict(self.mode_entries),
            'mode_cycles': dict(self.mode_cycles),
            'payload': dict(self.payload),
            'digest': self.digest,
            'memory_digest': self.memory_digest,
            'faults': [f.to_dict() for f in self.faults],
            'console': self.console,
        }


@dataclass
class ExperimentReport:
    """1 実験分のレポート（フィールド順は固定）"""
    scenario: str
    config: dict
    verdict: str
    expected_verdict: str = None
    kbytes: float = None
    mode_entries: dict = field(default_factory=dict)
    suppressed_faults: int = 0
    cycles: int = 0
    instret: int = 0
    trigger_intervals: list = field(default_factory=list)
    summary: dict = None
    race: dict = None
    sweep: dict = None
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        if self.sweep is not None:
            return bool(self.sweep.get('g_within_band') and self.sweep.get('days_within_band'))
        return self.expected_verdict is None or self.verdict == self.expected_verdict

    def to_dict(self):
        data = {
            'scenario': self.scenario,
            'verdict': self.verdict,
            'expected_verdict': self.expected_verdict,
            'passed': self.passed,
            'kbytes': self.kbytes,
            'mode_entries': dict(self.mode_entries),
            'suppressed_faults': self.suppressed_faults,
            'cycles': self.cycles,
            'instret': self.instret,
            'trigger_intervals': [list(i) for i in self.trigger_intervals],
            'summary': self.summary,
            'race': self.race,
            'sweep': self.sweep,
            'notes': list(self.notes),
            'config': self.config,
        }
        return data

    def csv_rows(self):
        """CSV 行（ヘッダ含む）。スイープは bits ごとの行"""
        if self.sweep is not None:
            rows = [SWEEP_CSV_HEADER]
            for point in self.sweep['points']:
                rows.append((point['bits'], point['instruction_count'], point['simulated_cycles']))
            return rows
        entries = self.mode_entries
        return [
            CSV_HEADER,
            (self.kbytes, entries.get('User', 0), entries.get('Supervisor', 0),
             entries.get('Machine', 0), self.suppressed_faults, self.verdict),
        ]
