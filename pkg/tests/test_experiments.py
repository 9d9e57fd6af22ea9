import csv
import io
import json

import pytest

from config import get_config
from models.errors import DegenerateFit, BuildError, ConfigError, Timeout
from models.machine import PrivilegeMode
from models.report import ExperimentReport
from models.run_config import RunConfig
from models.scenario import ScenarioParams, auto_quantum
from models.trojan import TrojanConfig, TrojanKind
from services.cpu import Simulator, StopCondition
from services.experiment_service import experiment_service, fit_sweep
from services.guest_kit import guest_kit
from services.trojan import TrojanRuntime
from utils.cache import ReportCache
from utils.constants import (
    CAUSE_STORE_PAGE_FAULT, EXIT_PANIC, PROTECTED_VA, MIN_QUANTUM, STORE_LOOP_CYCLES, ATTACK_SLICES,
    VERDICT_ATTACK_SUCCEEDS, VERDICT_STORE_FAULTS, VERDICT_KERNEL_PANIC, VERDICT_RACE_OBSERVED,
)


def run(scenario, kind='IRT1', **overrides):
    cfg = RunConfig(scenario=scenario, trojan=TrojanConfig(kind=kind), **overrides)
    return experiment_service.run_experiment(cfg)


# ================================================================================
# シナリオ
# ================================================================================

def test_kernel_cs_attack_succeeds():
    report = run('kernel_cs', kbytes=1)
    assert report.verdict == VERDICT_ATTACK_SUCCEEDS
    assert report.passed
    assert experiment_service.exit_status(report) == 0
    assert report.suppressed_faults == 128
    assert report.summary['exit_code'] == 0
    assert report.mode_entries['User'] >= 1
    assert report.mode_entries['Supervisor'] >= 1
    assert report.trigger_intervals
    assert not report.summary['faults']


def test_kernel_cs_without_trojan_faults():
    report = run('kernel_cs', kind='Disabled', kbytes=1)
    assert report.verdict == VERDICT_STORE_FAULTS
    assert report.passed
    assert report.suppressed_faults == 0


def test_baseline_store_faults():
    report = run('baseline', kbytes=1)
    assert report.verdict == VERDICT_STORE_FAULTS
    first = report.summary['faults'][0]
    assert first['cause'] == CAUSE_STORE_PAGE_FAULT
    assert first['tval'] == hex(PROTECTED_VA)
    # baseline は kind を指定してもペイロードなし
    assert report.summary['payload']['suppressed_faults'] == 0


def test_race_observed():
    report = run('race')
    assert report.verdict == VERDICT_RACE_OBSERVED
    race = report.race
    assert race['observed']
    assert race['latency'] == 8
    assert race['cold']['overridden']
    assert not race['warm']['overridden']
    assert race['cold_walk_cycles'] == 12
    assert race['matured_walk_cycle'] is not None
    assert race['matured_walk_cycle'] <= race['cold_check_walk_cycle']
    assert race['warm_cycles_since_raw_rise'] < race['latency']
    assert race['warm_fault_cause'] == CAUSE_STORE_PAGE_FAULT


def test_race_with_persistent_trigger_succeeds():
    report = run('race', kind='IRT2')
    assert report.verdict == VERDICT_ATTACK_SUCCEEDS
    assert report.suppressed_faults == 2


def test_availability_panics():
    report = run('availability', kind='IRT2', kbytes=1)
    assert report.verdict == VERDICT_KERNEL_PANIC
    assert report.summary['exit_code'] == EXIT_PANIC


REFERENCE_ROWS = [0.5, 1, 4, 16, 32]


@pytest.mark.parametrize('kbytes', REFERENCE_ROWS)
@pytest.mark.parametrize('scenario, kind', [
    ('kernel_cs', 'IRT1'),
    ('kernel_cs', 'IRT2'),
    ('multitask', 'IRT2'),
    ('integrity', 'IRT1'),
])
def test_attack_rows_succeed_across_preemptions(scenario, kind, kbytes):
    report = run(scenario, kind=kind, kbytes=kbytes)
    assert report.verdict == VERDICT_ATTACK_SUCCEEDS
    assert report.suppressed_faults == int(kbytes * 128)
    assert report.summary['exit_code'] == 0
    # どの行でも攻撃中に少なくとも 1 回はタイマーで切り替わる
    assert report.mode_entries['Machine'] > 0
    assert any(note.startswith('quantum=') for note in report.notes)


@pytest.mark.parametrize('kbytes', REFERENCE_ROWS)
def test_kernel_cs_rows_fault_without_trojan(kbytes):
    report = run('kernel_cs', kind='Disabled', kbytes=kbytes)
    assert report.verdict == VERDICT_STORE_FAULTS
    assert report.suppressed_faults == 0


def test_preemptions_grow_with_kbytes():
    small = run('kernel_cs', kbytes=0.5)
    large = run('kernel_cs', kbytes=32)
    assert large.mode_entries['Machine'] > small.mode_entries['Machine'] > 0


def test_auto_quantum_bounds():
    assert ScenarioParams(kbytes=0.5).quantum == MIN_QUANTUM
    assert ScenarioParams(kbytes=4).quantum == 512 * STORE_LOOP_CYCLES // ATTACK_SLICES
    assert ScenarioParams(kbytes=32).quantum == get_config().QUANTUM
    # 明示した値はそのまま
    assert ScenarioParams(kbytes=32, quantum=700).quantum == 700
    assert auto_quantum(0) == MIN_QUANTUM


def test_timeout_is_raised():
    with pytest.raises(Timeout) as e:
        run('kernel_cs', kbytes=1, max_cycles=1000)
    assert e.value.summary is not None
    assert e.value.summary.cycles >= 1000


def test_bad_build_propagates():
    with pytest.raises(BuildError):
        run('kernel_cs', kbytes=64)


@pytest.mark.slow
def test_kernel_cs_many_preemptions():
    report = run('kernel_cs', kbytes=32, quantum=500, max_cycles=20_000_000)
    assert report.verdict == VERDICT_ATTACK_SUCCEEDS
    assert report.suppressed_faults == 32 * 128
    assert report.mode_entries['Machine'] // 2 >= 50


# ================================================================================
# ペイロードの透過性・決定性
# ================================================================================

@pytest.mark.parametrize('scenario', [
    'kernel_cs', 'baseline', 'race', 'multitask', 'integrity', 'availability',
])
def test_disabled_trojan_is_transparent(scenario):
    params = ScenarioParams(scenario=scenario, trojan=TrojanConfig(kind=TrojanKind.Disabled))
    image, _ = guest_kit.build_scenario(params)
    plain = Simulator(image).run(StopCondition(2_000_000))
    disabled = Simulator(image, TrojanRuntime(params.trojan)).run(StopCondition(2_000_000))
    assert plain.to_dict() == disabled.to_dict()


# ================================================================================
# トリガのトレース
# ================================================================================

class EdgeRecorder(TrojanRuntime):
    """生トリガが切り替わったときの特権モードを記録する"""

    def __init__(self, config, **kwargs):
        super().__init__(config, **kwargs)
        self.edges = []

    def on_cycles(self, machine, n):
        raw = self.current_raw(machine)
        if raw != self.state.raw:
            self.edges.append((raw, machine.mode))
        super().on_cycles(machine, n)


def test_irt2_raw_stays_on_through_preemptions():
    params = ScenarioParams(scenario='multitask', kbytes=4, trojan=TrojanConfig(kind=TrojanKind.IRT2))
    image, expected = guest_kit.build_scenario(params)
    trojan = TrojanRuntime(params.trojan, record_streams=True)
    summary = Simulator(image, trojan).run(StopCondition(5_000_000))
    assert summary.exit_code == 0
    assert summary.mode_entries['Machine'] > 0

    # FSM は割り込みをまたいで S1 のままなので ON 区間は 1 本
    intervals = trojan.intervals(summary.cycles)
    assert len(intervals) == 1
    on, off = intervals[0]
    suppressed = [e for e in trojan.events if e.overridden]
    assert len(suppressed) == expected.length // 8
    assert all(on < e.cycle < off for e in suppressed)

    assert len(trojan.raw_stream) == summary.cycles
    assert sum(trojan.raw_stream) == off - on
    assert sum(trojan.delivered_stream) == off - on


def test_irt1_raw_follows_kernel_save_and_restore():
    params = ScenarioParams(scenario='kernel_cs', kbytes=4, quantum=500,
                            trojan=TrojanConfig(kind=TrojanKind.IRT1))
    image, expected = guest_kit.build_scenario(params)
    trojan = EdgeRecorder(params.trojan)
    summary = Simulator(image, trojan).run(StopCondition(5_000_000))
    assert summary.exit_code == 0
    preemptions = summary.mode_entries['Machine'] // 2
    assert preemptions >= 3

    # 最初の立ち上がり（活性化）と最後の立ち下がり（不活性化）以外は
    # カーネルの退避経路で落ち、復帰経路で立ち上がる
    rises = [mode for raw, mode in trojan.edges if raw][1:]
    falls = [mode for raw, mode in trojan.edges if not raw][:-1]
    assert rises and falls
    assert all(mode is PrivilegeMode.Supervisor for mode in rises)
    assert all(mode is PrivilegeMode.Supervisor for mode in falls)
    assert len(rises) == len(falls)

    intervals = trojan.intervals(summary.cycles)
    assert len(intervals) == len(rises) + 1
    # 活性化の前と不活性化の後のプリエンプトは区間を増やさない
    assert preemptions - 1 <= len(intervals) <= preemptions + 1
    assert trojan.stats.suppressed_faults == expected.length // 8


def test_reports_are_deterministic():
    first = experiment_service.emit_report(run('multitask', kind='IRT2', seed=5))
    second = experiment_service.emit_report(run('multitask', kind='IRT2', seed=5))
    assert first == second


def test_json_and_csv_agree():
    report = run('kernel_cs', kbytes=1)
    data = json.loads(experiment_service.emit_report(report, 'json'))
    rows = list(csv.reader(io.StringIO(experiment_service.emit_report(report, 'csv').decode())))
    assert rows[0] == ['kbytes', 'user', 'supervisor', 'machine', 'suppressed', 'verdict']
    kbytes, user, supervisor, machine, suppressed, verdict = rows[1]
    assert float(kbytes) == data['kbytes']
    assert int(user) == data['mode_entries']['User']
    assert int(supervisor) == data['mode_entries']['Supervisor']
    assert int(machine) == data['mode_entries']['Machine']
    assert int(suppressed) == data['suppressed_faults']
    assert verdict == data['verdict']


def test_unknown_format():
    report = run('race')
    with pytest.raises(ValueError):
        experiment_service.emit_report(report, 'xml')


def test_run_cached_reuses_report():
    cfg = RunConfig(scenario='race')
    assert experiment_service.run_cached(cfg) is experiment_service.run_cached(cfg)


# ================================================================================
# スイープ
# ================================================================================

def test_fit_sweep_exact_doubling():
    fit = fit_sweep([(b, 5 * 2 ** b) for b in range(8, 13)])
    assert fit.g == pytest.approx(2.0)
    assert fit.residual == pytest.approx(0.0, abs=1e-9)
    assert fit.count_at(20) == pytest.approx(5 * 2 ** 20)
    assert fit.extrapolate(20, 1e6, 1.0) == pytest.approx(5 * 2 ** 20 / 1e6)


@pytest.mark.parametrize('points', [
    [(8, 100), (9, 200)],
    [(8, 100), (8, 200), (8, 300)],
    [(8, 0), (9, 10), (10, 20)],
])
def test_fit_sweep_degenerate(points):
    with pytest.raises(DegenerateFit):
        fit_sweep(points)


def test_small_sweep():
    report = run('sweep', sweep_bits=[8, 9, 10, 11, 12])
    sweep = report.sweep
    assert [p['bits'] for p in sweep['points']] == [8, 9, 10, 11, 12]
    assert all(p['activations'] == 1 for p in sweep['points'])
    assert all(p['exit_code'] == 0 for p in sweep['points'])
    assert 1.9 <= sweep['g'] <= 2.1
    assert sweep['g_within_band']
    assert report.passed == sweep['days_within_band']

    rows = list(csv.reader(io.StringIO(experiment_service.emit_report(report, 'csv').decode())))
    assert rows[0] == ['bits', 'instruction_count', 'simulated_cycles']
    assert len(rows) == 6


@pytest.mark.parametrize('g_ok, days_ok, passed', [
    (True, True, True),
    (True, False, False),
    (False, True, False),
])
def test_sweep_passes_only_inside_both_bands(g_ok, days_ok, passed):
    report = ExperimentReport(scenario='sweep', config={}, verdict='',
                              sweep={'g_within_band': g_ok, 'days_within_band': days_ok})
    assert report.passed is passed
    assert experiment_service.exit_status(report) == (0 if passed else 1)


@pytest.mark.slow
def test_reference_sweep():
    report = run('sweep')
    sweep = report.sweep
    assert sweep['g_within_band']
    assert sweep['days_within_band']
    assert len(sweep['extrapolation']) == 9


# ================================================================================
# RunConfig
# ================================================================================

def test_run_config_defaults(run_config):
    assert run_config.trojan.kind is TrojanKind.IRT1
    assert run_config.trojan.latency == 8
    assert run_config.mem_size == 4 * 1024 * 1024
    assert run_config.max_cycles == 5_000_000


def test_run_config_overrides(run_config):
    cfg = run_config.with_overrides(kbytes=4, trojan={'latency': 12}, seed=None, out='x.json')
    assert cfg.kbytes == 4
    assert cfg.seed == run_config.seed
    assert cfg.trojan.latency == 12
    assert cfg.trojan.kind is TrojanKind.IRT1
    # 出力先はキャッシュキーに含めない
    assert cfg.digest() == cfg.with_overrides(out='y.json', format='csv').digest()
    assert cfg.digest() != run_config.digest()


def test_run_config_load(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('scenario: multitask\nseed: 4\ntrace: mmu,trojan\n')
    cfg = RunConfig.load(str(path))
    assert (cfg.scenario, cfg.seed, cfg.trace) == ('multitask', 4, ['mmu', 'trojan'])
    path.write_text('colour: blue\n')
    with pytest.raises(ConfigError):
        RunConfig.load(str(path))
    with pytest.raises(ConfigError):
        RunConfig.load(str(tmp_path / 'missing.yaml'))


@pytest.mark.parametrize('workers', [1, 2])
def test_parallel_reports_keep_input_order(workers):
    configs = [RunConfig(scenario='race', trojan=TrojanConfig(kind=kind)) for kind in ('IRT1', 'IRT2')]
    reports = experiment_service.run_experiments_parallel(configs, max_workers=workers)
    assert [r.verdict for r in reports] == [VERDICT_RACE_OBSERVED, VERDICT_ATTACK_SUCCEEDS]


def test_report_cache_bounds_and_stats():
    cache = ReportCache(duration=60, max_entries=2)
    calls = []
    for key in ('a', 'b', 'a', 'c', 'b'):
        cache.get_or_compute(key, lambda: calls.append(1) or len(calls))
    # 'c' の追加で最古の 'a' が追い出され、'b' は残る
    assert len(calls) == 3
    assert list(cache.entries) == ['b', 'c']
    assert cache.stats() == {'entries': 2, 'hits': 2, 'misses': 3}
    cache.clear()
    assert cache.get('b') is None
