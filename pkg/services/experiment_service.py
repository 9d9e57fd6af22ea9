# -*- coding: utf-8 -*-

"""
================================================================================
🧪 services/experiment_service.py - 実験の実行とレポート
================================================================================

RunConfig -> シナリオ構築 -> シミュレーション -> 判定 -> ExperimentReport。
スイープは幅ごとにループを実行して log2(命令数) を最小二乗で当てはめる。
"""

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from config import get_config
from models.errors import DegenerateFit, SimulatorError, Timeout
from models.report import ExperimentReport
from models.run_config import RunConfig
from models.trojan import TrojanKind
from services.cpu import Simulator, StopCondition
from services.guest_kit import guest_kit, scenario_trojan, SWEEP_LOOP_LEN
from services.trojan import TrojanRuntime
from utils import logger, enable_trace, disable_trace, report_cache
from utils.constants import (
    CAUSE_STORE_PAGE_FAULT, EXIT_OK, EXIT_PANIC, EXIT_USER_FAULT,
    VERDICT_ATTACK_SUCCEEDS, VERDICT_STORE_FAULTS, VERDICT_KERNEL_PANIC,
    VERDICT_RACE_OBSERVED, VERDICT_INCONCLUSIVE,
)

SECONDS_PER_DAY = 86_400
REFERENCE_SWEEP_BITS = 48
REFERENCE_SWEEP_DAYS = 9
SWEEP_G_BAND = (1.9, 2.1)
SWEEP_TIME_FACTOR = 4
EXTRAPOLATION_BITS = tuple(range(32, 65, 4))


# ================================================================================
# 📈 スイープの当てはめ
# ================================================================================

@dataclass(frozen=True)
class SweepFit:
    """log2(count) = intercept + slope * bits"""
    slope: float
    intercept: float
    residual: float

    @property
    def g(self):
        """1 ビットあたりの増加率"""
        return 2 ** self.slope

    def count_at(self, bits):
        return 2 ** (self.intercept + self.slope * bits)

    def extrapolate(self, bits, frequency, cpi):
        """bits 幅を走査する秒数（命令数 × cpi / 周波数）"""
        return self.count_at(bits) * cpi / frequency


def fit_sweep(points):
    """[(bits, count), ...] の最小二乗当てはめ。residual は log2 空間の RMS"""
    if len(points) < 3:
        raise DegenerateFit(f"need at least 3 sweep points, got {len(points)}")
    bits = np.array([p[0] for p in points], dtype=float)
    counts = np.array([p[1] for p in points], dtype=float)
    if np.all(bits == bits[0]):
        raise DegenerateFit("all sweep points have the same bit width")
    if np.any(counts <= 0):
        raise DegenerateFit("instruction counts must be positive")
    y = np.log2(counts)
    slope, intercept = np.polyfit(bits, y, 1)
    residual = float(np.sqrt(np.mean((y - (intercept + slope * bits)) ** 2)))
    return SweepFit(float(slope), float(intercept), residual)


# ================================================================================
# 🧪 実験サービス
# ================================================================================

class ExperimentService:
    """実験の実行・判定・レポート出力"""

    def __init__(self):
        self.config = get_config()

    # ------------------------------------------------------------------
    # 実行
    # ------------------------------------------------------------------
    def run_experiment(self, cfg):
        """RunConfig -> ExperimentReport（Timeout / BuildError はそのまま伝播）"""
        if isinstance(cfg, dict):
            cfg = RunConfig.from_dict(cfg)

        logger.info("=" * 70)
        logger.info(f"🚀 Experiment {cfg.scenario} "
                    f"(trojan={cfg.trojan.kind.value}, kbytes={cfg.kbytes}, seed={cfg.seed})")
        logger.info("=" * 70)

        handler = enable_trace(cfg.trace, cfg.trace_path) if cfg.trace else None
        try:
            if cfg.scenario == 'sweep':
                report = self._run_sweep(cfg)
            else:
                report = self._run_scenario(cfg)
        except Timeout as e:
            logger.error(f"❌ {cfg.scenario}: {e}")
            raise
        except SimulatorError as e:
            logger.error(f"❌ {cfg.scenario}: {e}", exc_info=True)
            raise
        finally:
            if handler is not None:
                disable_trace(handler)

        status = '✅' if report.passed else '⚠️'
        logger.info("=" * 70)
        logger.info(f"{status} {cfg.scenario}: verdict={report.verdict} "
                    f"expected={report.expected_verdict} cycles={report.cycles}")
        logger.info("=" * 70)
        return report

    def run_cached(self, cfg):
        """設定ダイジェストでキャッシュした run_experiment"""
        key = cfg.digest()
        cached = report_cache.get(key)
        if cached is not None:
            logger.info(f"💾 Using cached report for {cfg.scenario} ({key[:12]})")
            return cached
        report = self.run_experiment(cfg)
        report_cache.set(key, report)
        return report

    def run_experiments_parallel(self, configs, max_workers=None):
        """独立な実験をプロセスプールで実行（結果は入力順）"""
        configs = list(configs)
        workers = max_workers or self.config.MAX_WORKERS
        if workers <= 1 or len(configs) <= 1:
            return [self.run_experiment(cfg) for cfg in configs]
        logger.info(f"📊 Running {len(configs)} experiments on {workers} workers")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, configs))

    def _run_scenario(self, cfg):
        params = cfg.scenario_params()
        image, expected = guest_kit.build_scenario(params)
        trojan = TrojanRuntime(scenario_trojan(params), record_streams=cfg.record_streams)
        sim = Simulator.from_run_config(cfg, image, trojan)
        summary = sim.run(StopCondition(cfg.max_cycles))

        race = self.race_report(trojan, summary) if params.scenario == 'race' else None
        verdict = self.judge(summary, expected, sim.machine.mem, race)

        notes = []
        if not params.is_reference_row and params.scenario != 'race':
            notes.append(f'kbytes={params.kbytes} is not a reference row')
        if params.scenario == 'race':
            notes.append('timer disabled: the only context switches are the two yields')
        else:
            notes.append(f'quantum={params.quantum}')
        notes.append(f"preemptions={summary.mode_entries['Machine'] // 2}")

        return ExperimentReport(
            scenario=params.scenario,
            config=cfg.to_dict(),
            verdict=verdict,
            expected_verdict=expected.verdict,
            kbytes=params.kbytes,
            mode_entries=dict(summary.mode_entries),
            suppressed_faults=trojan.stats.suppressed_faults,
            cycles=summary.cycles,
            instret=summary.instret,
            trigger_intervals=trojan.intervals(summary.cycles),
            summary=summary.to_dict(),
            race=race,
            notes=notes,
        )

    # ------------------------------------------------------------------
    # 判定
    # ------------------------------------------------------------------
    def judge(self, summary, expected, mem, race=None):
        """RunSummary + メモリから判定（ExpectedOutcome の verdict は見ない）"""
        if summary.exit_code == EXIT_PANIC:
            return VERDICT_KERNEL_PANIC
        if race is not None and race['observed']:
            return VERDICT_RACE_OBSERVED
        if (summary.exit_code == EXIT_OK and expected.region_matches(mem)
                and summary.payload['suppressed_faults'] == expected.length // 8):
            return VERDICT_ATTACK_SUCCEEDS
        if summary.exit_code == EXIT_USER_FAULT and summary.faults:
            first = summary.faults[0]
            if first.cause == CAUSE_STORE_PAGE_FAULT and first.tval == expected.region_va:
                return VERDICT_STORE_FAULTS
        return VERDICT_INCONCLUSIVE

    def race_report(self, trojan, summary):
        """コールド（ウォークあり）とウォーム（TLB ヒット）のストアを対比"""
        events = trojan.events
        cold = next((e for e in events if not e.tlb_hit), None)
        warm = next((e for e in events if e.tlb_hit and cold is not None and e.cycle > cold.cycle), None)
        warm_fault = None
        if warm is not None and not warm.overridden:
            warm_fault = next((f.cause for f in summary.faults if f.tval == warm.va), None)
        observed = (cold is not None and cold.overridden and warm is not None
                    and warm_fault == CAUSE_STORE_PAGE_FAULT)
        return {
            'latency': trojan.config.latency,
            'cold': cold.to_dict() if cold else None,
            'warm': warm.to_dict() if warm else None,
            'cold_walk_cycles': cold.walk_cycles if cold else None,
            'cold_check_walk_cycle': (cold.cycle - cold.walk_start_cycle) if cold else None,
            'matured_walk_cycle': cold.matured_walk_cycle if cold else None,
            'warm_cycles_since_raw_rise': warm.cycles_since_raw_rise if warm else None,
            'warm_fault_cause': warm_fault,
            'observed': observed,
        }

    # ------------------------------------------------------------------
    # スイープ
    # ------------------------------------------------------------------
    def _run_sweep(self, cfg):
        params = cfg.scenario_params()
        points = []
        for bits in params.sweep_bits:
            image = guest_kit.build_sweep_loop(bits, params.sweep_variant)
            trojan_cfg = replace(params.trojan, kind=TrojanKind.IRT1, comparator_width=bits)
            trojan = TrojanRuntime(trojan_cfg)
            sim = Simulator.from_run_config(cfg, image, trojan)
            summary = sim.run(StopCondition(cfg.max_cycles))
            points.append({
                'bits': bits,
                'instruction_count': summary.instret,
                'simulated_cycles': summary.cycles,
                'activations': trojan.stats.activations,
                'exit_code': summary.exit_code,
            })
            logger.info(f"📊 sweep bits={bits}: {summary.instret} instructions, {summary.cycles} cycles")

        fit = fit_sweep([(p['bits'], p['instruction_count']) for p in points])
        cpi = sum(p['simulated_cycles'] for p in points) / sum(p['instruction_count'] for p in points)
        sweep = self.sweep_section(fit, points, cpi, params.sweep_variant)

        return ExperimentReport(
            scenario='sweep',
            config=cfg.to_dict(),
            verdict=None,
            expected_verdict=None,
            mode_entries={},
            cycles=sum(p['simulated_cycles'] for p in points),
            instret=sum(p['instruction_count'] for p in points),
            sweep=sweep,
        )

    def sweep_section(self, fit, points, cpi, variant='reg'):
        target = self.config.TARGET_FREQUENCY_HZ
        measured = self.config.MEASURED_FREQUENCY_HZ
        table = []
        for bits in EXTRAPOLATION_BITS:
            at_measured = fit.extrapolate(bits, measured, cpi)
            table.append({
                'bits': bits,
                'instructions': fit.count_at(bits),
                'seconds_at_measured_clock': at_measured,
                'seconds_at_target_clock': at_measured * measured / target,
            })
        reference_days = fit.extrapolate(REFERENCE_SWEEP_BITS, target, cpi) / SECONDS_PER_DAY
        lo, hi = SWEEP_G_BAND
        return {
            'variant': variant,
            'loop_len': SWEEP_LOOP_LEN[variant],
            'points': points,
            'g': fit.g,
            'slope': fit.slope,
            'intercept': fit.intercept,
            'residual': fit.residual,
            'cpi': cpi,
            'cycles_per_iteration': cpi * SWEEP_LOOP_LEN[variant],
            'target_frequency_hz': target,
            'measured_frequency_hz': measured,
            'extrapolation': table,
            'days_at_48_bits': reference_days,
            'g_within_band': lo <= fit.g <= hi,
            'days_within_band': (REFERENCE_SWEEP_DAYS / SWEEP_TIME_FACTOR <= reference_days
                                 <= REFERENCE_SWEEP_DAYS * SWEEP_TIME_FACTOR),
        }

    # ------------------------------------------------------------------
    # 出力
    # ------------------------------------------------------------------
    def emit_report(self, report, fmt='json'):
        """レポートを bytes に（フィールド順は固定、同じ実行なら同じバイト列）"""
        if fmt == 'json':
            return (json.dumps(report.to_dict(), indent=2, default=_json_default) + '\n').encode('utf-8')
        if fmt == 'csv':
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator='\n')
            writer.writerows(report.csv_rows())
            return buf.getvalue().encode('utf-8')
        raise ValueError(f"Unknown report format: {fmt}")

    def exit_status(self, report):
        """プロセス終了コード: 判定が期待どおりなら 0"""
        return 0 if report.passed else 1


def _json_default(value):
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _run_one(cfg):
    return experiment_service.run_experiment(cfg)


# グローバルサービスインスタンス
experiment_service = ExperimentService()
