"""State-vector evolution, detector statistics and parameter sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    InvalidCircuitError,
    MZIError,
    PostSelectionImpossible,
    UnknownDetectorError,
    UnknownParameterError,
)
from .model import (
    PROBE,
    SYSTEM,
    BeamSplitter,
    Block,
    Circuit,
    Cut,
    Kerr,
    PhaseShift,
    bind_params,
    resolve,
    validate_circuit,
)

# Below this a detector is treated as structurally dark.
POSTSELECT_THRESHOLD = 1e-30


@dataclass(frozen=True)
class JointState:
    """Amplitudes over (system basis) x (probe basis), system-major."""

    amplitudes: np.ndarray
    system_basis: tuple[str, ...]
    probe_basis: tuple[str, ...]

    def matrix(self):
        return self.amplitudes.reshape(len(self.system_basis), len(self.probe_basis))

    def amplitude(self, system_rail, probe_rail):
        return self.matrix()[
            self.system_basis.index(system_rail), self.probe_basis.index(probe_rail)
        ]

    def norm2(self):
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def rail_probabilities(self, subsystem):
        p = np.abs(self.matrix()) ** 2
        if subsystem == SYSTEM:
            return dict(zip(self.system_basis, p.sum(axis=1)))
        return dict(zip(self.probe_basis, p.sum(axis=0)))


@dataclass(frozen=True)
class Snapshot:
    index: int
    label: str | None
    state: JointState


@dataclass(frozen=True)
class EvolutionTrace:
    circuit: Circuit
    bindings: Mapping[str, float]
    snapshots: tuple[Snapshot, ...]

    @property
    def final(self) -> JointState:
        return self.snapshots[-1].state

    def at_cut(self, label):
        for snap in self.snapshots:
            if snap.label == label:
                return snap.state
        return None


@dataclass(frozen=True)
class ConditionalProbeStats:
    """Statistics of the other subsystem given a click on one detector.

    ``rail_probs`` covers every basis rail of the conditioned subsystem,
    sinks included, so it always sums to 1.  ``imbalance`` is the
    difference between the first two detectors declared on that subsystem
    (P(DP1|sel) - P(DP2|sel) for the standard layout).
    """

    selected: str
    post_select_prob: float
    detector_probs: dict
    rail_probs: dict
    imbalance: float


def _check(circuit):
    report = validate_circuit(circuit)
    if not report.ok:
        raise InvalidCircuitError(report.diagnostics)


def initial_state(circuit: Circuit, bindings: Mapping[str, float] | None = None) -> JointState:
    sys_basis, probe_basis = circuit.system_basis, circuit.probe_basis
    amps = np.zeros(len(sys_basis) * len(probe_basis), dtype=complex)
    amps[circuit.joint_index(circuit.init_system, circuit.init_probe)] = 1.0
    return JointState(amps, sys_basis, probe_basis)


def _apply(psi, stage, k, circuit, bindings, sinks):
    """Apply one stage in place to the (n_sys, n_probe) amplitude array."""
    if isinstance(stage, Cut):
        return
    if isinstance(stage, Kerr):
        i = circuit.system_basis.index(stage.system_rail)
        j = circuit.probe_basis.index(stage.probe_rail)
        psi[i, j] *= np.exp(1j * resolve(stage.eps, bindings))
        return
    basis = circuit.basis(stage.subsystem)
    # Work on rows for the system, columns for the probe.
    view = psi if stage.subsystem == SYSTEM else psi.T
    if isinstance(stage, BeamSplitter):
        t = resolve(stage.t, bindings)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"transmittance {t!r} outside [0, 1] at stage {k}")
        a, b = basis.index(stage.rail_a), basis.index(stage.rail_b)
        ra, rb = view[a].copy(), view[b].copy()
        tr, rf = math.sqrt(t), 1j * math.sqrt(1.0 - t)
        view[a] = tr * ra + rf * rb
        view[b] = rf * ra + tr * rb
    elif isinstance(stage, PhaseShift):
        view[basis.index(stage.rail)] *= np.exp(1j * resolve(stage.phi, bindings))
    elif isinstance(stage, Block):
        i, s = basis.index(stage.rail), basis.index(sinks[k])
        view[s] = view[i]
        view[i] = 0.0


def evolve(circuit: Circuit, bindings: Mapping[str, float] | None = None) -> EvolutionTrace:
    """Run the circuit, keeping the state at every stage boundary.

    Snapshot 0 is the initial state and snapshot ``k + 1`` the state after
    stage ``k``.  A snapshot taken after a Cut carries the cut's label.
    """
    _check(circuit)
    if bindings is None:
        bindings = bind_params(circuit)
    state = initial_state(circuit, bindings)
    psi = state.matrix().copy()
    sinks = circuit.block_sinks()
    snaps = [Snapshot(0, None, state)]
    for k, stage in enumerate(circuit.stages):
        _apply(psi, stage, k, circuit, bindings, sinks)
        label = stage.label if isinstance(stage, Cut) else None
        snaps.append(
            Snapshot(k + 1, label, JointState(psi.ravel().copy(), state.system_basis, state.probe_basis))
        )
    return EvolutionTrace(circuit, dict(bindings), tuple(snaps))


def _detector(circuit, name, subsystem=None):
    det = circuit.detector(name)
    if det is None or (subsystem is not None and det.subsystem != subsystem):
        raise UnknownDetectorError(name, subsystem)
    return det


def detector_probability(trace: EvolutionTrace, detector_name: str) -> float:
    det = _detector(trace.circuit, detector_name)
    return float(trace.final.rail_probabilities(det.subsystem)[det.rail])


def post_select(trace: EvolutionTrace, subsystem: str, detector_name: str) -> ConditionalProbeStats:
    """Condition the final state on ``detector_name`` (on ``subsystem``) firing."""
    circuit = trace.circuit
    det = _detector(circuit, detector_name, subsystem)
    mat = trace.final.matrix()
    if subsystem == SYSTEM:
        branch = mat[circuit.system_basis.index(det.rail), :]
        other, other_basis = PROBE, circuit.probe_basis
    else:
        branch = mat[:, circuit.probe_basis.index(det.rail)]
        other, other_basis = SYSTEM, circuit.system_basis
    weights = np.abs(branch) ** 2
    p_sel = float(weights.sum())
    if p_sel <= POSTSELECT_THRESHOLD:
        raise PostSelectionImpossible(
            f"detector {detector_name!r} fires with probability {p_sel:.3g}"
        )
    cond = weights / p_sel
    rail_probs = {r: float(p) for r, p in zip(other_basis, cond)}
    others = [d for d in circuit.detectors if d.subsystem == other]
    detector_probs = {d.name: rail_probs[d.rail] for d in others}
    if len(others) >= 2:
        s = detector_probs[others[0].name] - detector_probs[others[1].name]
    else:
        s = math.nan
    return ConditionalProbeStats(detector_name, p_sel, detector_probs, rail_probs, s)


def dark_magnitude(trace: EvolutionTrace) -> float:
    """Norm of the dark-port rail just before the last system beam splitter.

    NaN when the circuit does not name a dark-port rail.
    """
    circuit = trace.circuit
    if circuit.dark_port is None:
        return math.nan
    last = None
    for k, stage in enumerate(circuit.stages):
        if isinstance(stage, BeamSplitter) and stage.subsystem == SYSTEM:
            last = k
    # Snapshot k is the state entering stage k.
    snap = trace.snapshots[last if last is not None else -1].state
    row = snap.matrix()[circuit.system_basis.index(circuit.dark_port), :]
    return float(np.sqrt(np.sum(np.abs(row) ** 2)))


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    value: float
    p_select: float
    dark_mag: float
    conditionals: dict
    s_imbalance: float
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    param: str
    detector: str
    probe_detectors: tuple[str, ...]
    rows: tuple[SweepRow, ...] = field(default_factory=tuple)

    def to_csv(self) -> str:
        header = ["param", "p_select", "dark_mag"]
        header += [f"p_{name}" for name in self.probe_detectors]
        header.append("s_imbalance")
        lines = [",".join(header)]
        for row in self.rows:
            cells = [fmt(row.value), fmt(row.p_select), fmt(row.dark_mag)]
            cells += [fmt(row.conditionals.get(n, math.nan)) for n in self.probe_detectors]
            cells.append(fmt(row.s_imbalance))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def fmt(x: float) -> str:
    """Locale-independent 17-significant-digit rendering."""
    x = float(x)
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return format(x, ".17g")


def sweep(
    circuit: Circuit,
    param_name: str,
    values: Sequence[float],
    detector: str,
    overrides: Mapping[str, float] | None = None,
) -> SweepResult:
    """Evaluate the circuit once per value of ``param_name``, in input order.

    A row whose post-selection is impossible is kept with its error
    recorded and NaN conditionals; the sweep carries on.
    """
    if param_name not in circuit.params:
        raise UnknownParameterError(param_name, circuit.params)
    det = _detector(circuit, detector)
    base = bind_params(circuit, overrides)
    other = PROBE if det.subsystem == SYSTEM else SYSTEM
    conditioned = tuple(d.name for d in circuit.detectors if d.subsystem == other)
    rows = []
    for value in values:
        bindings = dict(base, **{param_name: float(value)})
        trace = evolve(circuit, bindings)
        p = detector_probability(trace, detector)
        dark = dark_magnitude(trace)
        try:
            stats = post_select(trace, det.subsystem, detector)
        except MZIError as exc:
            rows.append(SweepRow(float(value), p, dark, {}, math.nan, f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(SweepRow(float(value), p, dark, stats.detector_probs, stats.imbalance))
    return SweepResult(param_name, detector, conditioned, tuple(rows))
