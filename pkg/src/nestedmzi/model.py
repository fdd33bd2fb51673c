"""Circuit data model and per-stage matrices.

A circuit is a fixed set of static rails for two subsystems (the system
photon and the probe photon) plus an ordered list of stages.  The joint
basis is the product of the system rails and the probe rails, system-major:
joint index ``i_sys * n_probe + i_probe``.

When any ``Block`` stage is present every subsystem gets sink rails
appended to its basis: one dedicated sink per block on that subsystem, and
at least one per subsystem.  Sink names are ``sink``, ``sink2``, ``sink3``
and so on; they are reserved and cannot be declared.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .errors import UnboundParameterError, UnknownParameterError

SYSTEM = "system"
PROBE = "probe"
SUBSYSTEMS = (SYSTEM, PROBE)

SINK = "sink"

RAIL_NAME = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
PARAM_NAME = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")
_SINK_NAME = re.compile(r"sink[0-9]*\Z")

# A literal real or the name of an entry in the circuit's parameter table.
ParamRef = Union[float, str]


@dataclass(frozen=True)
class RailId:
    subsystem: str
    name: str


@dataclass(frozen=True)
class BeamSplitter:
    """Two-rail beam splitter with power transmittance ``t``.

    ``out_a = sqrt(t) in_a + i sqrt(1-t) in_b`` and
    ``out_b = i sqrt(1-t) in_a + sqrt(t) in_b``.
    """

    subsystem: str
    rail_a: str
    rail_b: str
    t: ParamRef = 0.5


@dataclass(frozen=True)
class PhaseShift:
    subsystem: str
    rail: str
    phi: ParamRef


@dataclass(frozen=True)
class Kerr:
    """Cross-phase coupling: multiplies the joint state (system_rail, probe_rail) by e^{i eps}."""

    system_rail: str
    probe_rail: str
    eps: ParamRef


@dataclass(frozen=True)
class Block:
    """Absorber: moves all amplitude on ``rail`` into a dedicated sink rail."""

    subsystem: str
    rail: str


@dataclass(frozen=True)
class Cut:
    label: str


Stage = Union[BeamSplitter, PhaseShift, Kerr, Block, Cut]


@dataclass(frozen=True)
class Detector:
    name: str
    subsystem: str
    rail: str


@dataclass(frozen=True)
class Circuit:
    system_rails: tuple[str, ...]
    probe_rails: tuple[str, ...]
    init_system: str
    init_probe: str
    stages: tuple[Stage, ...] = ()
    detectors: tuple[Detector, ...] = ()
    params: Mapping[str, float] = field(default_factory=dict)
    # System rail whose amplitude, just before the last system beam
    # splitter, is the dark port of the inner interferometer.
    dark_port: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "system_rails", tuple(self.system_rails))
        object.__setattr__(self, "probe_rails", tuple(self.probe_rails))
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        object.__setattr__(self, "params", dict(self.params))

    def rails(self, subsystem):
        if subsystem == SYSTEM:
            return self.system_rails
        if subsystem == PROBE:
            return self.probe_rails
        raise ValueError(f"unknown subsystem {subsystem!r}")

    def has_block(self):
        return any(isinstance(s, Block) for s in self.stages)

    def block_sinks(self):
        """Map each Block stage index to the name of its sink rail."""
        counters = {SYSTEM: 0, PROBE: 0}
        out = {}
        for k, stage in enumerate(self.stages):
            if isinstance(stage, Block) and stage.subsystem in counters:
                counters[stage.subsystem] += 1
                out[k] = _sink_name(counters[stage.subsystem])
        return out

    def sinks(self, subsystem):
        if not self.has_block():
            return ()
        count = sum(
            1 for s in self.stages if isinstance(s, Block) and s.subsystem == subsystem
        )
        return tuple(_sink_name(i) for i in range(1, max(count, 1) + 1))

    def basis(self, subsystem):
        """Rails of one subsystem including any sink rails."""
        return self.rails(subsystem) + self.sinks(subsystem)

    @property
    def system_basis(self):
        return self.basis(SYSTEM)

    @property
    def probe_basis(self):
        return self.basis(PROBE)

    @property
    def dim(self):
        return len(self.system_basis) * len(self.probe_basis)

    def joint_index(self, system_rail, probe_rail):
        n_probe = len(self.probe_basis)
        return self.system_basis.index(system_rail) * n_probe + self.probe_basis.index(
            probe_rail
        )

    def detector(self, name):
        for d in self.detectors:
            if d.name == name:
                return d
        return None

    def cut_index(self, label):
        """Index of the Cut stage with this label, or None."""
        for k, stage in enumerate(self.stages):
            if isinstance(stage, Cut) and stage.label == label:
                return k
        return None

    def cut_labels(self):
        return [s.label for s in self.stages if isinstance(s, Cut)]


def _sink_name(i):
    return SINK if i == 1 else f"{SINK}{i}"


def is_sink(name):
    return bool(_SINK_NAME.match(name))


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    rule: str
    message: str
    stage: int | None = None
    token: str | None = None
    # Declaration kind for non-stage findings: rails, init, param, detector, darkport.
    scope: str | None = None

    def __str__(self):
        where = f"stage {self.stage}: " if self.stage is not None else ""
        return f"{where}{self.rule}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def ok(self):
        return not self.diagnostics

    def __bool__(self):
        return self.ok


def validate_circuit(circuit: Circuit) -> ValidationReport:
    """Check every structural rule and return all violations found."""
    diags = []

    def add(rule, message, stage=None, token=None, scope=None):
        diags.append(Diagnostic(rule, message, stage, token, scope))

    for subsystem in SUBSYSTEMS:
        rails = circuit.rails(subsystem)
        if not rails:
            add("missing rails", f"no {subsystem} rails declared", scope="rails")
        seen = set()
        for name in rails:
            if not isinstance(name, str) or not RAIL_NAME.match(name):
                add("invalid rail name", f"{name!r} is not a valid rail name",
                    token=name, scope="rails")
            elif is_sink(name):
                add("reserved rail name", f"{name!r} is reserved for sink rails",
                    token=name, scope="rails")
            if name in seen:
                add("duplicate rail", f"{subsystem} rail {name!r} declared twice",
                    token=name, scope="rails")
            seen.add(name)

    for subsystem, init in ((SYSTEM, circuit.init_system), (PROBE, circuit.init_probe)):
        if init not in circuit.rails(subsystem):
            add("unknown rail", f"initial {subsystem} rail {init!r} is not declared",
                token=init, scope="init")

    for name, value in circuit.params.items():
        if not PARAM_NAME.match(name):
            add("invalid parameter name", f"{name!r} must start with an uppercase letter",
                token=name, scope="param")
        if not _finite(value):
            add("non-finite value", f"parameter {name!r} has value {value!r}",
                token=name, scope="param")

    def check_rail(k, subsystem, rail):
        if subsystem not in SUBSYSTEMS:
            add("unknown subsystem", f"{subsystem!r}", k, subsystem)
            return False
        if rail not in circuit.rails(subsystem):
            add("unknown rail", f"{subsystem} rail {rail!r} is not declared", k, rail)
            return False
        return True

    def check_ref(k, ref):
        if isinstance(ref, str):
            if ref not in circuit.params:
                add("unresolved parameter", f"parameter {ref!r} is not declared", k, ref)
                return None
            return circuit.params[ref]
        if not _finite(ref):
            add("non-finite value", f"{ref!r}", k)
            return None
        return float(ref)

    labels = set()
    for k, stage in enumerate(circuit.stages):
        if isinstance(stage, BeamSplitter):
            check_rail(k, stage.subsystem, stage.rail_a)
            check_rail(k, stage.subsystem, stage.rail_b)
            if stage.rail_a == stage.rail_b:
                add("rails must differ", "beam splitter rails must differ", k, stage.rail_b)
            t = check_ref(k, stage.t)
            if t is not None and not 0.0 <= t <= 1.0:
                token = stage.t if isinstance(stage.t, str) else None
                add("transmittance out of range", f"t={t!r} is outside [0, 1]", k, token)
        elif isinstance(stage, PhaseShift):
            check_rail(k, stage.subsystem, stage.rail)
            check_ref(k, stage.phi)
        elif isinstance(stage, Kerr):
            check_rail(k, SYSTEM, stage.system_rail)
            check_rail(k, PROBE, stage.probe_rail)
            check_ref(k, stage.eps)
        elif isinstance(stage, Block):
            check_rail(k, stage.subsystem, stage.rail)
        elif isinstance(stage, Cut):
            if not isinstance(stage.label, str) or not RAIL_NAME.match(stage.label):
                add("invalid cut label", f"{stage.label!r}", k, stage.label)
            if stage.label in labels:
                add("duplicate cut label", f"cut {stage.label!r} appears twice", k, stage.label)
            labels.add(stage.label)
        else:
            add("unknown stage", f"{type(stage).__name__}", k)

    names = set()
    for det in circuit.detectors:
        if det.name in names:
            add("duplicate detector", f"detector {det.name!r} declared twice",
                token=det.name, scope="detector")
        names.add(det.name)
        if det.subsystem not in SUBSYSTEMS:
            add("unknown subsystem", f"{det.subsystem!r}", token=det.subsystem, scope="detector")
        elif det.rail not in circuit.basis(det.subsystem):
            add("detector on unknown rail",
                f"detector {det.name!r} watches undeclared {det.subsystem} rail {det.rail!r}",
                token=det.rail, scope="detector")

    if circuit.dark_port is not None and circuit.dark_port not in circuit.system_rails:
        add("unknown rail", f"dark-port rail {circuit.dark_port!r} is not declared",
            token=circuit.dark_port, scope="darkport")

    return ValidationReport(tuple(diags))


def _finite(x):
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


# --------------------------------------------------------------------------
# parameters


def bind_params(circuit: Circuit, overrides: Mapping[str, float] | None = None) -> dict:
    """Circuit defaults overlaid with ``overrides``."""
    bound = dict(circuit.params)
    for name, value in (overrides or {}).items():
        if name not in circuit.params:
            raise UnknownParameterError(name, circuit.params)
        bound[name] = float(value)
    return bound


def resolve(ref: ParamRef, bindings: Mapping[str, float]) -> float:
    if isinstance(ref, str):
        try:
            return float(bindings[ref])
        except KeyError:
            raise UnboundParameterError(ref) from None
    return float(ref)


# --------------------------------------------------------------------------
# matrices


def _bs_block(t):
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmittance {t!r} outside [0, 1]")
    r = math.sqrt(t)
    s = 1j * math.sqrt(1.0 - t)
    return np.array([[r, s], [s, r]], dtype=complex)


def local_matrix(stage: Stage, circuit: Circuit, bindings: Mapping[str, float], index=None):
    """Matrix of a single-subsystem stage on that subsystem's basis.

    ``index`` is the stage's position in ``circuit.stages``; it is needed
    to locate the dedicated sink of a Block and looked up when omitted.
    """
    if isinstance(stage, Kerr):
        raise TypeError("Kerr stages act on both subsystems; use stage_matrix")
    if isinstance(stage, Cut):
        raise TypeError("Cut stages have no subsystem")
    basis = circuit.basis(stage.subsystem)
    u = np.eye(len(basis), dtype=complex)
    if isinstance(stage, BeamSplitter):
        a, b = basis.index(stage.rail_a), basis.index(stage.rail_b)
        blk = _bs_block(resolve(stage.t, bindings))
        idx = np.ix_([a, b], [a, b])
        u[idx] = blk
    elif isinstance(stage, PhaseShift):
        i = basis.index(stage.rail)
        u[i, i] = np.exp(1j * resolve(stage.phi, bindings))
    elif isinstance(stage, Block):
        if index is None:
            index = _locate(circuit, stage)
        sink = basis.index(circuit.block_sinks()[index])
        i = basis.index(stage.rail)
        # The sink is fresh, so the swap is exactly "move everything to the sink".
        u[[i, sink]] = u[[sink, i]]
    return u


def stage_matrix(stage: Stage, circuit: Circuit, bindings: Mapping[str, float], index=None):
    """Dense matrix of one stage on the joint (system x probe) basis."""
    n_sys, n_probe = len(circuit.system_basis), len(circuit.probe_basis)
    if isinstance(stage, Cut):
        return np.eye(n_sys * n_probe, dtype=complex)
    if isinstance(stage, Kerr):
        diag = np.ones(n_sys * n_probe, dtype=complex)
        diag[circuit.joint_index(stage.system_rail, stage.probe_rail)] = np.exp(
            1j * resolve(stage.eps, bindings)
        )
        return np.diag(diag)
    u = local_matrix(stage, circuit, bindings, index)
    if stage.subsystem == SYSTEM:
        return np.kron(u, np.eye(n_probe, dtype=complex))
    return np.kron(np.eye(n_sys, dtype=complex), u)


def _locate(circuit, stage):
    for k, s in enumerate(circuit.stages):
        if s is stage:
            return k
    for k, s in enumerate(circuit.stages):
        if s == stage:
            return k
    raise ValueError("stage is not part of the circuit")
