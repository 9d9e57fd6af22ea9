from .assembler import assembler, Assembler
from .cpu import Simulator, StopCondition
from .mmu import Mmu, Tlb, walk, check_permission
from .trojan import TrojanRuntime
from .guest_kit import guest_kit, build_scenario, build_sweep_loop
from .stealth import (
    signal_prob, transition_prob, comparator_activation_prob,
    exhaustive_signal_prob, monte_carlo, build_pattern, analyze_pattern,
)
from .experiment_service import experiment_service, fit_sweep

__all__ = [
    'assembler', 'Assembler',
    'Simulator', 'StopCondition',
    'Mmu', 'Tlb', 'walk', 'check_permission',
    'TrojanRuntime',
    'guest_kit', 'build_scenario', 'build_sweep_loop',
    'signal_prob', 'transition_prob', 'comparator_activation_prob',
    'exhaustive_signal_prob', 'monte_carlo', 'build_pattern', 'analyze_pattern',
    'experiment_service', 'fit_sweep',
]
