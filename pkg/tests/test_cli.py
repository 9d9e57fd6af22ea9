import json

import pytest
from click.testing import CliRunner

from cli import cli
from models.memory_image import MemoryImage

PROGRAM = """
.org 0x80000000
_start:
    li a0, 3
    li t0, 0x10000000
    sd a0, 0(t0)
hang:
    j hang
"""


@pytest.fixture
def runner():
    return CliRunner()


def test_asm_then_run(runner, tmp_path):
    source = tmp_path / 'prog.s'
    source.write_text(PROGRAM)
    manifest = tmp_path / 'prog.yaml'

    result = runner.invoke(cli, ['asm', str(source), '-o', str(manifest)])
    assert result.exit_code == 0, result.output
    image = MemoryImage.load(str(manifest))
    assert image.entry == 0x8000_0000

    result = runner.invoke(cli, ['run', str(manifest)])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.stdout)
    assert summary['exit_code'] == 3
    assert summary['stop_reason']


def test_asm_error_exits_2(runner, tmp_path):
    source = tmp_path / 'bad.s'
    source.write_text('    frobnicate x1, x2\n')
    result = runner.invoke(cli, ['asm', str(source), '-o', str(tmp_path / 'out.yaml')])
    assert result.exit_code == 2


def test_scenario_manifest(runner, tmp_path):
    out = tmp_path / 'race.yaml'
    result = runner.invoke(cli, ['scenario', 'race', '-o', str(out)])
    assert result.exit_code == 0, result.output
    data = json.loads(result.stdout)
    assert data['expected']['verdict'] == 'RaceObserved'
    assert out.exists()


def test_exp_kernel_cs(runner, tmp_path):
    out = tmp_path / 'report.csv'
    result = runner.invoke(cli, ['exp', 'kernel-cs', '--kbytes', '1', '--format', 'csv', '--out', str(out)])
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0] == 'kbytes,user,supervisor,machine,suppressed,verdict'
    assert lines[1].endswith(',128,AttackSucceeds')


def test_exp_baseline(runner):
    result = runner.invoke(cli, ['exp', 'baseline'])
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)['verdict'] == 'StoreFaults'


def test_exp_mismatch_exits_1(runner):
    # latency がウォーク時間を超えるとコールドストアも上書きされず StoreFaults になる
    result = runner.invoke(cli, ['exp', 'race', '--latency', '64'])
    assert result.exit_code == 1


def test_exp_build_error_exits_2(runner):
    result = runner.invoke(cli, ['exp', 'kernel-cs', '--kbytes', '64'])
    assert result.exit_code == 2


def test_exp_config_file(runner, tmp_path):
    config = tmp_path / 'run.yaml'
    config.write_text('kbytes: 0.5\ntrojan:\n  kind: IRT2\n')
    result = runner.invoke(cli, ['exp', 'integrity', '--config', str(config)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert report['suppressed_faults'] == 64
    assert report['config']['trojan']['kind'] == 'IRT2'


def test_exp_stealth(runner):
    result = runner.invoke(cli, ['exp', 'stealth', '--pattern', 'comparator:8', '--samples', '10000'])
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)['exact'] == '1/256'


def test_bad_trace_channel(runner):
    result = runner.invoke(cli, ['exp', 'race', '--trace', 'mmu,cache'])
    assert result.exit_code == 2
    assert 'cache' in result.output


def test_trace_to_file(runner, tmp_path):
    trace = tmp_path / 'trace.log'
    result = runner.invoke(cli, ['exp', 'race', '--trace', 'trojan', '--trace-path', str(trace)])
    assert result.exit_code == 0, result.output
    assert trace.read_text()
