import random
from types import SimpleNamespace

import pytest

from models.errors import ConfigError
from models.trojan import (
    TrojanConfig, TrojanKind, FsmState, TriggerState, DEFAULT_ACTIVATION, DEFAULT_DEACTIVATION,
)
from services.trojan import (
    TrojanRuntime, sample_irt1, sample_irt2, tick, payload_delivered_now, comparator_masks,
)

ACT_HI, ACT_LO = DEFAULT_ACTIVATION
DEACT_HI, DEACT_LO = DEFAULT_DEACTIVATION


def fake_machine():
    return SimpleNamespace(gpr=[0] * 32, cycles=0)


def advance(runtime, machine, n):
    machine.cycles += n
    runtime.on_cycles(machine, n)


@pytest.mark.parametrize('latency', [1, 3, 8, 17])
def test_delay_line_law(latency):
    rng = random.Random(latency)
    runtime = TrojanRuntime(TrojanConfig(kind=TrojanKind.IRT1, latency=latency), record_streams=True)
    machine = fake_machine()
    machine.gpr[20] = ACT_HI
    while machine.cycles < 100_000:
        if rng.random() < 0.15:
            machine.gpr[21] = ACT_LO if machine.gpr[21] != ACT_LO else rng.getrandbits(64)
        advance(runtime, machine, rng.choice([1, 1, 1, 2, 4, 5, 12, 40]))
        assert runtime.state.delivered == bool(runtime.delivered_stream[-1])

    raw = runtime.raw_stream
    delivered = runtime.delivered_stream
    assert len(raw) == len(delivered) == machine.cycles
    assert not any(delivered[:latency])
    violations = sum(1 for t in range(latency, len(raw)) if delivered[t] != raw[t - latency])
    assert violations == 0
    assert runtime.stats.raw_on_cycles == sum(raw)
    assert runtime.stats.delivered_on_cycles == sum(delivered)


def test_irt1_rearms_from_register_values():
    runtime = TrojanRuntime(TrojanConfig(kind=TrojanKind.IRT1, latency=8))
    machine = fake_machine()
    machine.gpr[20], machine.gpr[21] = ACT_HI, ACT_LO
    advance(runtime, machine, 20)
    assert runtime.payload_delivered_now()

    # コンテキストスイッチで別の値になり、復元で戻る
    machine.gpr[20], machine.gpr[21] = 0x8000_8000, 0x8000_0000_0000_0005
    advance(runtime, machine, 30)
    assert not runtime.payload_delivered_now()
    machine.gpr[20], machine.gpr[21] = ACT_HI, ACT_LO
    advance(runtime, machine, 8)
    # 51 で立ち上がった raw は 59 で届く
    assert machine.cycles == 58
    assert not runtime.payload_delivered_now()
    advance(runtime, machine, 1)
    assert runtime.payload_delivered_now()
    assert runtime.stats.activations == 2
    assert runtime.stats.deactivations == 1
    assert runtime.intervals(machine.cycles) == [(1, 21), (51, 59)]


def test_irt2_fsm_persists_until_deactivation():
    runtime = TrojanRuntime(TrojanConfig(kind=TrojanKind.IRT2, latency=3), record_streams=True)
    machine = fake_machine()
    runtime.on_add(ACT_HI, ACT_LO, machine)
    assert runtime.state.fsm is FsmState.S1
    rng = random.Random(5)
    for _ in range(2000):
        machine.gpr = [rng.getrandbits(64) for _ in range(32)]
        runtime.on_add(rng.getrandbits(64), rng.getrandbits(64), machine)
        advance(runtime, machine, rng.randint(1, 6))
    assert runtime.state.fsm is FsmState.S1
    assert all(runtime.raw_stream)

    # オペランドの順序が逆なら一致しない
    runtime.on_add(DEACT_LO, DEACT_HI, machine)
    assert runtime.state.fsm is FsmState.S1
    runtime.on_add(DEACT_HI, DEACT_LO, machine)
    assert runtime.state.fsm is FsmState.S0
    assert runtime.stats.activations == 1
    assert runtime.stats.deactivations == 1


def test_comparator_width_masks_low_bits():
    cfg = TrojanConfig(kind=TrojanKind.IRT1, comparator_width=8)
    assert comparator_masks(cfg) == (0, 0xFF)
    gpr = [0] * 32
    gpr[21] = 0x1200 | (ACT_LO & 0xFF)
    assert sample_irt1(gpr, cfg)
    gpr[21] ^= 1
    assert not sample_irt1(gpr, cfg)

    wide = TrojanConfig(kind=TrojanKind.IRT1, comparator_width=72)
    assert comparator_masks(wide) == (0xFF, (1 << 64) - 1)


def test_disabled_runtime_is_inert():
    runtime = TrojanRuntime(TrojanConfig(kind=TrojanKind.Disabled))
    machine = fake_machine()
    machine.gpr[20], machine.gpr[21] = ACT_HI, ACT_LO
    runtime.on_add(ACT_HI, ACT_LO, machine)
    advance(runtime, machine, 100)
    assert not runtime.payload_delivered_now()
    assert runtime.stats.activations == 0
    assert runtime.state.fsm is FsmState.S0


@pytest.mark.parametrize('overrides', [
    {'latency': 0},
    {'comparator_width': 0},
    {'comparator_width': 129},
    {'host_regs': (20, 20)},
    {'host_regs': (0, 21)},
    {'deactivation': DEFAULT_ACTIVATION},
    {'kind': 'IRT3'},
])
def test_invalid_trojan_config(overrides):
    with pytest.raises(ConfigError):
        TrojanConfig(**overrides)


def test_config_dict_round_trip():
    cfg = TrojanConfig(kind=TrojanKind.IRT2, latency=5, comparator_width=64)
    assert TrojanConfig.from_dict(cfg.to_dict()) == cfg


def test_tick_is_a_pure_delay():
    state = TriggerState(latency=3)
    raws = [True, False, False, True, True, False, False, False]
    out = [tick(state, r) for r in raws]
    assert out == [False, False, False] + raws[:-3]
    assert state.stats.raw_on_cycles == 3
    assert state.stats.delivered_on_cycles == 3


def test_sample_irt2_transitions():
    cfg = TrojanConfig(kind=TrojanKind.IRT2)
    state = TriggerState(latency=cfg.latency)
    assert sample_irt2(1, 2, state, cfg) is FsmState.S0
    assert sample_irt2(ACT_HI, ACT_LO, state, cfg) is FsmState.S1
    assert sample_irt2(ACT_HI, ACT_LO, state, cfg) is FsmState.S1
    assert state.stats.activations == 1
    assert sample_irt2(DEACT_HI, DEACT_LO, state, cfg) is FsmState.S0
    assert state.stats.deactivations == 1


def test_payload_gated_by_kind():
    state = TriggerState(latency=1)
    state.delivered = True
    assert payload_delivered_now(state, TrojanConfig(kind=TrojanKind.IRT1))
    assert not payload_delivered_now(state, TrojanConfig(kind=TrojanKind.Disabled))
