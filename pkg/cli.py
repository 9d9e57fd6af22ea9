# -*- coding: utf-8 -*-

"""
================================================================================
🧰 cli.py - コマンドライン入口
================================================================================

  asm <in.s> -o <manifest>        アセンブルしてイメージマニフェストを書き出す
  run <manifest>                  イメージを実行して RunSummary を JSON で出す
  scenario <name> -o <manifest>   シナリオイメージと期待結果を出す
  exp <name>                      実験を実行してレポートを出す

exp の終了コード: 0 = 判定が期待どおり, 1 = 不一致, 2 = SimulatorError。
"""

import json
import sys

import click

from models.errors import SimulatorError, Timeout
from models.memory_image import MemoryImage
from models.run_config import RunConfig
from models.scenario import ScenarioParams
from models.trojan import TrojanConfig, TrojanKind
from services import assembler, experiment_service, guest_kit, analyze_pattern
from services.cpu import Simulator, StopCondition
from services.trojan import TrojanRuntime
from utils import logger, enable_trace, disable_trace
from utils.logger import TRACE_CHANNELS

EXIT_MISMATCH = 1
EXIT_ERROR = 2

EXPERIMENTS = ('kernel-cs', 'multitask', 'race', 'integrity', 'availability', 'sweep', 'baseline', 'stealth')
TROJAN_KINDS = [kind.value for kind in TrojanKind]


def _write_output(data, out=None):
    """bytes を --out か stdout へ"""
    if out:
        with open(out, 'wb') as f:
            f.write(data)
        logger.info(f"💾 Wrote {len(data)} bytes to {out}")
    else:
        stream = click.get_binary_stream('stdout')
        stream.write(data)
        stream.flush()


def _json_bytes(data):
    return (json.dumps(data, indent=2) + '\n').encode('utf-8')


def _parse_trace(ctx, param, value):
    if not value:
        return []
    channels = [c.strip() for c in value.split(',') if c.strip()]
    unknown = [c for c in channels if c not in TRACE_CHANNELS]
    if unknown:
        raise click.BadParameter(f"unknown trace channel(s): {', '.join(unknown)}")
    return channels


def _parse_bits(ctx, param, value):
    """'8..16' または '8,10,12'"""
    if not value:
        return None
    try:
        if '..' in value:
            lo, hi = value.split('..', 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(b) for b in value.split(',') if b.strip()]
    except ValueError:
        raise click.BadParameter(f"expected LO..HI or a comma list, got '{value}'")


def _load_run_config(path):
    return RunConfig.load(path) if path else RunConfig()


def _fail(e):
    """SimulatorError をログに出して終了コード 2 で抜ける"""
    if isinstance(e, Timeout):
        logger.error(f"❌ {e}")
    else:
        logger.error(f"❌ {type(e).__name__}: {e}")
    sys.exit(EXIT_ERROR)


# ================================================================================
# 🧰 コマンド
# ================================================================================

@click.group()
@click.option('--log-level', default=None, help='ログレベル（既定は IRT_LOG_LEVEL）')
def cli(log_level):
    """Interrupt-resilient trojan simulator"""
    if log_level:
        logger.setLevel(log_level.upper())


@cli.command('asm')
@click.argument('source', type=click.Path(exists=True, dir_okay=False))
@click.option('-o', '--out', required=True, type=click.Path(dir_okay=False), help='出力マニフェスト')
@click.option('--origin', default='0', help='.org がないときの開始アドレス')
def asm_command(source, out, origin):
    """アセンブリをイメージマニフェストに変換"""
    try:
        image = assembler.assemble_file(source, origin=int(origin, 0))
        image.dump(out)
    except SimulatorError as e:
        _fail(e)
    except ValueError:
        raise click.BadParameter(f"bad origin: {origin}", param_hint='--origin')
    logger.info(f"✅ Assembled {source}: {image.size} bytes, entry 0x{image.entry:x} -> {out}")


@cli.command('run')
@click.argument('manifest', type=click.Path(exists=True, dir_okay=False))
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), help='YAML run config')
@click.option('--max-cycles', type=int, default=None)
@click.option('--trojan', 'trojan_kind', type=click.Choice(TROJAN_KINDS), default=None)
@click.option('--trace', callback=_parse_trace, default=None, help='mmu,trojan')
@click.option('--trace-path', default=None, type=click.Path(dir_okay=False))
@click.option('--out', default=None, type=click.Path(dir_okay=False))
def run_command(manifest, config_path, max_cycles, trojan_kind, trace, trace_path, out):
    """マニフェストのイメージを停止まで実行"""
    handler = None
    try:
        cfg = _load_run_config(config_path).with_overrides(
            max_cycles=max_cycles,
            trojan={'kind': trojan_kind} if trojan_kind else None,
        )
        image = MemoryImage.load(manifest)
        if trace:
            handler = enable_trace(trace, trace_path)
        trojan = TrojanRuntime(cfg.trojan)
        sim = Simulator.from_run_config(cfg, image, trojan)
        summary = sim.run(StopCondition(cfg.max_cycles))
    except Timeout as e:
        if e.summary is not None:
            _write_output(_json_bytes(e.summary.to_dict()), out)
        _fail(e)
    except SimulatorError as e:
        _fail(e)
    finally:
        if handler is not None:
            disable_trace(handler)

    _write_output(_json_bytes(summary.to_dict()), out)
    logger.info(f"✅ {manifest}: exit={summary.exit_code} cycles={summary.cycles} instret={summary.instret}")


@cli.command('scenario')
@click.argument('name', type=click.Choice([n for n in EXPERIMENTS if n not in ('sweep', 'stealth')]))
@click.option('--kbytes', type=float, default=1)
@click.option('--quantum', type=int, default=None)
@click.option('--seed', type=int, default=1)
@click.option('--trojan', 'trojan_kind', type=click.Choice(TROJAN_KINDS), default='IRT1')
@click.option('--latency', type=int, default=None)
@click.option('-o', '--out', required=True, type=click.Path(dir_okay=False), help='出力マニフェスト')
def scenario_command(name, kbytes, quantum, seed, trojan_kind, latency, out):
    """シナリオイメージを組み立ててマニフェストに書き出す（期待結果は stdout）"""
    try:
        trojan = TrojanConfig(kind=trojan_kind, latency=latency or RunConfig().trojan.latency)
        params = ScenarioParams(scenario=name, kbytes=kbytes, seed=seed, trojan=trojan,
                                quantum=quantum)
        image, expected = guest_kit.build_scenario(params)
        image.dump(out)
    except SimulatorError as e:
        _fail(e)
    _write_output(_json_bytes({
        'scenario': params.scenario,
        'manifest': out,
        'entry': f'0x{image.entry:x}',
        'expected': expected.to_dict(),
    }))


@cli.command('exp')
@click.argument('name', type=click.Choice(EXPERIMENTS))
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), help='YAML run config')
@click.option('--seed', type=int, default=None)
@click.option('--out', default=None, type=click.Path(dir_okay=False))
@click.option('--format', 'fmt', type=click.Choice(['json', 'csv']), default=None)
@click.option('--trace', callback=_parse_trace, default=None, help='mmu,trojan')
@click.option('--trace-path', default=None, type=click.Path(dir_okay=False))
@click.option('--trojan', 'trojan_kind', type=click.Choice(TROJAN_KINDS), default=None)
@click.option('--latency', type=int, default=None)
@click.option('--kbytes', type=float, default=None)
@click.option('--quantum', type=int, default=None)
@click.option('--max-cycles', type=int, default=None)
@click.option('--no-tlb', is_flag=True, default=False)
@click.option('--bits', callback=_parse_bits, default=None, help='sweep 幅: 8..16 または 8,12,16')
@click.option('--variant', type=click.Choice(['reg', 'mem']), default=None)
@click.option('--pattern', default='nand-nor', help='stealth: and-nand | nand-nor | comparator:<c>')
@click.option('--samples', type=int, default=1_000_000)
@click.option('--chunks', type=int, default=1)
def exp_command(name, config_path, seed, out, fmt, trace, trace_path, trojan_kind, latency,
                kbytes, quantum, max_cycles, no_tlb, bits, variant, pattern, samples, chunks):
    """実験を実行してレポートを出力（終了コードは判定と期待の一致）"""
    if name == 'stealth':
        try:
            report = analyze_pattern(pattern, samples=samples, seed=seed or 0, chunks=chunks)
        except SimulatorError as e:
            _fail(e)
        _write_output(_json_bytes(report.to_dict()), out)
        return

    trojan = {}
    if trojan_kind:
        trojan['kind'] = trojan_kind
    if latency is not None:
        trojan['latency'] = latency
    try:
        cfg = _load_run_config(config_path).with_overrides(
            scenario=name, seed=seed, out=out, format=fmt, trace=trace or None,
            trace_path=trace_path, trojan=trojan or None, kbytes=kbytes, quantum=quantum,
            max_cycles=max_cycles, tlb_enabled=False if no_tlb else None,
            sweep_bits=bits, sweep_variant=variant,
        )
        report = experiment_service.run_experiment(cfg)
    except SimulatorError as e:
        _fail(e)

    _write_output(experiment_service.emit_report(report, cfg.format), cfg.out)
    status = experiment_service.exit_status(report)
    if status != 0:
        logger.warning(f"⚠️ {name}: verdict {report.verdict} != expected {report.expected_verdict}")
        sys.exit(EXIT_MISMATCH)


if __name__ == '__main__':
    cli()
