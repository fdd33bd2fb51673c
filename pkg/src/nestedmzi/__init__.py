"""Nested Mach-Zehnder weak-measurement simulator."""

from .circuitfile import CircuitFileError, ParseError, SourceSpan, parse, serialize
from .engine import (
    ConditionalProbeStats,
    EvolutionTrace,
    JointState,
    SweepResult,
    dark_magnitude,
    detector_probability,
    evolve,
    initial_state,
    post_select,
    sweep,
)
from .errors import (
    MZIError,
    PostSelectionImpossible,
    UnboundParameterError,
    UnknownCutError,
    UnknownDetectorError,
    UnknownParameterError,
    ZeroOverlap,
)
from .model import (
    BeamSplitter,
    Block,
    Circuit,
    Cut,
    Detector,
    Kerr,
    PhaseShift,
    bind_params,
    stage_matrix,
    validate_circuit,
)
from .scenarios import ScenarioKind, ScenarioReport, build_scenario, run_scenario
from .tsvf import (
    WeakValueReport,
    backward_functional,
    first_order_response_check,
    forward_state,
    strip_couplings,
    weak_value,
    weak_value_report,
)

__version__ = "0.1.0"
