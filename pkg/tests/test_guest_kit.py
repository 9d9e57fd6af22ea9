import pytest

from models.errors import BuildError
from models.scenario import ScenarioParams
from models.trojan import TrojanConfig, TrojanKind
from services.cpu import Simulator, StopCondition
from services.guest_kit import guest_kit, build_sweep_loop, render_prelude, xorshift_seed, SWEEP_LOOP_LEN
from services.trojan import TrojanRuntime
from utils.constants import (
    PROTECTED_PA, PROTECTED_VA, TASKLIST_PA, TASKLIST_VA, SENTINEL_OFFSET, SENTINEL_VALUE,
    VERDICT_ATTACK_SUCCEEDS, VERDICT_STORE_FAULTS, VERDICT_KERNEL_PANIC, VERDICT_RACE_OBSERVED,
    FILL_VALUE, KDATA, TCB_BASE, TASK_VA,
)


def params(scenario='kernel_cs', kind=TrojanKind.IRT1, **kwargs):
    return ScenarioParams(scenario=scenario, trojan=TrojanConfig(kind=kind), **kwargs)


def read_u64(image, addr):
    seg = next(s for s in image.segments if s.addr <= addr < s.end)
    off = addr - seg.addr
    return int.from_bytes(seg.data[off:off + 8], 'little')


def test_kernel_cs_image_layout():
    image, expected = guest_kit.build_scenario(params(kbytes=4))
    assert expected.verdict == VERDICT_ATTACK_SUCCEEDS
    assert (expected.region_pa, expected.region_va) == (PROTECTED_PA, PROTECTED_VA)
    assert expected.length == 4096
    assert expected.fill == FILL_VALUE
    assert image.entry == image.symbol('_start')
    assert read_u64(image, TASKLIST_PA + SENTINEL_OFFSET) == SENTINEL_VALUE
    # TCB 0 の sepc はハンドリングプロセスの入口
    assert read_u64(image, TCB_BASE) == TASK_VA
    assert read_u64(image, KDATA + 8) == 1


@pytest.mark.parametrize('scenario, kind, verdict', [
    ('kernel_cs', TrojanKind.IRT1, VERDICT_ATTACK_SUCCEEDS),
    ('kernel_cs', TrojanKind.Disabled, VERDICT_STORE_FAULTS),
    ('baseline', TrojanKind.IRT1, VERDICT_STORE_FAULTS),
    ('multitask', TrojanKind.IRT2, VERDICT_ATTACK_SUCCEEDS),
    ('integrity', TrojanKind.IRT1, VERDICT_ATTACK_SUCCEEDS),
    ('availability', TrojanKind.IRT2, VERDICT_KERNEL_PANIC),
    ('availability', TrojanKind.Disabled, VERDICT_STORE_FAULTS),
    ('race', TrojanKind.IRT1, VERDICT_RACE_OBSERVED),
    ('race', TrojanKind.IRT2, VERDICT_ATTACK_SUCCEEDS),
])
def test_expected_verdicts(scenario, kind, verdict):
    _, expected = guest_kit.build_scenario(params(scenario, kind))
    assert expected.verdict == verdict


def test_availability_targets_task_list():
    _, expected = guest_kit.build_scenario(params('availability', TrojanKind.IRT2))
    assert expected.region_va == TASKLIST_VA


def test_multitask_has_two_tasks():
    image, _ = guest_kit.build_scenario(params('multitask', TrojanKind.IRT2, seed=9))
    assert read_u64(image, KDATA + 8) == 2
    assert read_u64(image, KDATA + 16) == xorshift_seed(9)
    assert read_u64(image, KDATA + 24) == 1


def test_build_errors():
    with pytest.raises(BuildError):
        guest_kit.build_scenario(params(kbytes=64))
    with pytest.raises(BuildError):
        guest_kit.build_scenario(params(quantum=10))
    with pytest.raises(BuildError):
        guest_kit.build_scenario(params('sweep'))
    with pytest.raises(BuildError):
        params(kbytes=0)
    with pytest.raises(BuildError):
        params(kbytes=0.001)
    with pytest.raises(BuildError):
        ScenarioParams(scenario='nonsense')
    with pytest.raises(BuildError):
        build_sweep_loop(2)
    with pytest.raises(BuildError):
        build_sweep_loop(8, 'stack')


def test_race_ignores_quantum_floor():
    # race はタイマーを使わないので quantum の下限チェックの対象外
    _, expected = guest_kit.build_scenario(params('race', quantum=10))
    assert expected.length == 16


def test_non_reference_row_still_builds():
    params_ = params(kbytes=2)
    assert not params_.is_reference_row
    _, expected = guest_kit.build_scenario(params_)
    assert expected.length == 2048


def test_render_prelude():
    text = render_prelude({'A': 16, 'B': 'kernel_trap', 'C': -1})
    assert text.splitlines() == ['.equ A, 0x10', '.equ B, kernel_trap', '.equ C, 0xffffffffffffffff']


@pytest.mark.parametrize('variant', ['reg', 'mem'])
def test_sweep_loop_iterations(variant):
    bits = 8
    image = build_sweep_loop(bits, variant)
    trojan = TrojanRuntime(TrojanConfig(kind=TrojanKind.IRT1, comparator_width=bits))
    sim = Simulator(image, trojan)
    summary = sim.run(StopCondition(1_000_000))
    assert summary.exit_code == 0
    assert sim.machine.gpr[21] == 1 << bits
    # boot の mret で U に 1 回入るだけ
    assert summary.mode_entries == {'User': 1, 'Supervisor': 0, 'Machine': 0}
    assert trojan.stats.activations == 1

    # 2^bits 回のループ本体 + 固定の前後処理
    doubled = Simulator(build_sweep_loop(bits + 1, variant)).run(StopCondition(1_000_000))
    assert doubled.instret - summary.instret == SWEEP_LOOP_LEN[variant] * (1 << bits)
