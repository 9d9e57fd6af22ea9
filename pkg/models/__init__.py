from .errors import (
    SimulatorError, IllegalInstruction, Timeout, AsmError, BuildError,
    DegenerateFit, ConfigError, ManifestError, Trap,
)
from .instruction import Instruction
from .machine import PrivilegeMode, TrapCause, FaultRecord, CsrFile, PhysicalMemory, MachineState
from .translation import AccessType, Pte, TranslationRequest, TranslationResult, WalkStep
from .trojan import TrojanKind, FsmState, TrojanConfig, TriggerState, PayloadStats, PayloadEvent
from .memory_image import MemoryImage, Segment
from .scenario import ScenarioParams, ExpectedOutcome
from .run_config import RunConfig
from .report import RunSummary, ExperimentReport
from .gates import GateKind, GateNode, ProbReport

__all__ = [
    'SimulatorError', 'IllegalInstruction', 'Timeout', 'AsmError', 'BuildError',
    'DegenerateFit', 'ConfigError', 'ManifestError', 'Trap',
    'Instruction',
    'PrivilegeMode', 'TrapCause', 'FaultRecord', 'CsrFile', 'PhysicalMemory', 'MachineState',
    'AccessType', 'Pte', 'TranslationRequest', 'TranslationResult', 'WalkStep',
    'TrojanKind', 'FsmState', 'TrojanConfig', 'TriggerState', 'PayloadStats', 'PayloadEvent',
    'MemoryImage', 'Segment',
    'ScenarioParams', 'ExpectedOutcome',
    'RunConfig',
    'RunSummary', 'ExperimentReport',
    'GateKind', 'GateNode', 'ProbReport',
]
