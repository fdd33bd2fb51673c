"""Forward states, backward functionals and weak values of rail projectors.

Everything here is evaluated on the coupling-stripped circuit: Kerr stages
and all probe stages are removed, leaving the system photon alone between
its preparation and its detection.  The backward object is the row of the
post-cut system matrix belonging to the detector rail, so that

    amplitude(detector) = sum_m c_m psi_m

and the weak value of the projector onto rail ``m`` is
``c_m psi_m / sum_k c_k psi_k``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import engine
from .engine import fmt
from .errors import UnknownCutError, UnknownDetectorError, ZeroOverlap
from .model import (
    PROBE,
    SINK,
    SYSTEM,
    Circuit,
    Cut,
    Kerr,
    bind_params,
    local_matrix,
    resolve,
)

ZERO_OVERLAP = engine.POSTSELECT_THRESHOLD


def strip_couplings(circuit: Circuit) -> Circuit:
    """Drop every Kerr stage and every probe stage, keeping order otherwise."""
    kept = tuple(
        s
        for s in circuit.stages
        if isinstance(s, Cut) or (not isinstance(s, Kerr) and s.subsystem == SYSTEM)
    )
    return dataclasses.replace(circuit, stages=kept)


def _bindings(circuit, bindings):
    return bind_params(circuit) if bindings is None else bindings


def _cut_position(circuit, cut_label):
    k = circuit.cut_index(cut_label)
    if k is None:
        raise UnknownCutError(cut_label)
    return k


def _system_product(circuit, bindings, start, stop):
    u = np.eye(len(circuit.system_basis), dtype=complex)
    for k in range(start, stop):
        stage = circuit.stages[k]
        if isinstance(stage, Cut):
            continue
        u = local_matrix(stage, circuit, bindings, index=k) @ u
    return u


def forward_state(circuit_sys: Circuit, cut_label: str, bindings=None) -> np.ndarray:
    """System amplitudes at the cut, indexed by ``circuit.system_basis``."""
    circuit_sys = strip_couplings(circuit_sys)
    bindings = _bindings(circuit_sys, bindings)
    k = _cut_position(circuit_sys, cut_label)
    psi0 = np.zeros(len(circuit_sys.system_basis), dtype=complex)
    psi0[circuit_sys.system_basis.index(circuit_sys.init_system)] = 1.0
    return _system_product(circuit_sys, bindings, 0, k) @ psi0


def backward_functional(circuit_sys: Circuit, cut_label: str, detector: str, bindings=None) -> np.ndarray:
    """Coefficients mapping system amplitudes at the cut to the detector amplitude."""
    circuit_sys = strip_couplings(circuit_sys)
    bindings = _bindings(circuit_sys, bindings)
    det = circuit_sys.detector(detector)
    if det is None or det.subsystem != SYSTEM:
        raise UnknownDetectorError(detector, SYSTEM)
    k = _cut_position(circuit_sys, cut_label)
    u = _system_product(circuit_sys, bindings, k + 1, len(circuit_sys.stages))
    return u[circuit_sys.system_basis.index(det.rail)].copy()


def _overlap_terms(circuit, cut_label, detector, bindings):
    stripped = strip_couplings(circuit)
    bindings = _bindings(stripped, bindings)
    psi = forward_state(stripped, cut_label, bindings)
    c = backward_functional(stripped, cut_label, detector, bindings)
    overlap = complex(c @ psi)
    if abs(overlap) <= ZERO_OVERLAP:
        raise ZeroOverlap(
            f"forward state at cut {cut_label!r} has no overlap with detector {detector!r}"
        )
    return stripped, psi, c, overlap


def weak_value(circuit: Circuit, cut_label: str, detector: str, rail: str | Iterable[str], bindings=None) -> complex:
    """Weak value of the projector onto ``rail``, or onto a union of rails."""
    stripped, psi, c, overlap = _overlap_terms(circuit, cut_label, detector, bindings)
    rails = [rail] if isinstance(rail, str) else list(rail)
    basis = stripped.system_basis
    proj = np.zeros((len(basis), len(basis)))
    for r in rails:
        if r in basis:
            proj[basis.index(r), basis.index(r)] = 1.0
        elif r != SINK:
            raise KeyError(f"unknown system rail {r!r}")
    return complex(c @ proj @ psi) / overlap


@dataclass(frozen=True)
class WeakValueReport:
    cut_label: str
    postselect_detector: str
    overlap: complex
    weak_values: dict
    eps_stripped: bool = True

    @property
    def p_select(self):
        return abs(self.overlap) ** 2

    def total(self):
        return sum(self.weak_values.values())

    def to_csv(self, header=True) -> str:
        lines = ["cut,detector,rail,wv_re,wv_im,overlap_re,overlap_im,p_select"] if header else []
        tail = [fmt(self.overlap.real), fmt(self.overlap.imag), fmt(self.p_select)]
        rows = list(self.weak_values.items()) + [("sum", self.total())]
        for rail, wv in rows:
            lines.append(",".join([self.cut_label, self.postselect_detector, rail,
                                   fmt(wv.real), fmt(wv.imag)] + tail))
        return "\n".join(lines) + "\n"


def weak_value_report(circuit: Circuit, cut_label: str, detector: str, bindings=None) -> WeakValueReport:
    """Weak values of every system rail at the cut.

    A ``sink`` entry is always present; it is exactly 0 for circuits
    without blocks.
    """
    stripped, psi, c, overlap = _overlap_terms(circuit, cut_label, detector, bindings)
    values = {r: complex(c[m] * psi[m]) / overlap for m, r in enumerate(stripped.system_basis)}
    values.setdefault(SINK, 0j)
    return WeakValueReport(cut_label, detector, overlap, values)


# --------------------------------------------------------------------------
# pointer response


@dataclass(frozen=True)
class ResponseCheck:
    param: str
    step: float
    coupled_rails: tuple[str, ...]
    weak_value_sum: complex
    ds_full: float
    ds_effective: float
    non_real: bool

    @property
    def difference(self):
        return abs(self.ds_full - self.ds_effective)


def _coupling_layout(circuit, coupled_rails):
    kerr = [k for k, s in enumerate(circuit.stages) if isinstance(s, Kerr)]
    if not kerr:
        raise ValueError("circuit has no Kerr couplings")
    probe_rails = {circuit.stages[k].probe_rail for k in kerr}
    if len(probe_rails) != 1:
        raise ValueError("all Kerr stages must couple to the same probe rail")
    for k in kerr:
        if circuit.stages[k].system_rail not in coupled_rails:
            raise ValueError(
                f"Kerr stage {k} couples rail {circuit.stages[k].system_rail!r}, "
                f"not among {sorted(coupled_rails)}"
            )
    for k in range(kerr[0], kerr[-1]):
        if not isinstance(circuit.stages[k], (Kerr, Cut)):
            raise ValueError("Kerr stages must be contiguous")
    return kerr, probe_rails.pop()


def _imbalance(probs, circuit, subsystem):
    dets = [d for d in circuit.detectors if d.subsystem == subsystem]
    if len(dets) < 2:
        raise ValueError(f"need two {subsystem} detectors for an imbalance")
    return probs[dets[0].rail] - probs[dets[1].rail]


def _effective_imbalance(circuit, bindings, kerr, probe_rail, weak_values):
    """Probe imbalance when the couplings act as one phase e^{i sum eps_k W_k}."""
    exponent = sum(
        resolve(circuit.stages[k].eps, bindings) * weak_values[circuit.stages[k].system_rail]
        for k in kerr
    )
    basis = circuit.probe_basis
    pi = np.zeros(len(basis), dtype=complex)
    pi[basis.index(circuit.init_probe)] = 1.0
    for k, stage in enumerate(circuit.stages):
        if k == kerr[0]:
            pi[basis.index(probe_rail)] *= np.exp(1j * exponent)
        elif isinstance(stage, (Kerr, Cut)) or stage.subsystem != PROBE:
            continue
        else:
            pi = local_matrix(stage, circuit, bindings, index=k) @ pi
    w = np.abs(pi) ** 2
    probs = dict(zip(basis, w / w.sum()))
    return _imbalance(probs, circuit, PROBE)


def first_order_response_check(
    circuit: Circuit,
    coupled_rails: Iterable[str],
    detector: str,
    eps_small: float,
    *,
    param: str = "EPS",
    bindings: Mapping[str, float] | None = None,
) -> ResponseCheck:
    """Compare dS/d(param) at 0 from the full engine and from the weak-value model.

    S is the conditional probe imbalance given ``detector``.  Both slopes
    are central differences with step ``eps_small``.
    """
    if not eps_small or not math.isfinite(eps_small):
        raise ValueError("eps_small must be a finite non-zero step")
    coupled_rails = tuple(coupled_rails)
    base = bind_params(circuit, bindings)
    if param not in base:
        raise KeyError(f"unknown parameter {param!r}")
    kerr, probe_rail = _coupling_layout(circuit, coupled_rails)

    label = "coupling_point"
    while label in circuit.cut_labels():
        label += "_"
    marked = dataclasses.replace(
        circuit,
        stages=circuit.stages[: kerr[0]] + (Cut(label),) + circuit.stages[kerr[0]:],
    )
    report = weak_value_report(marked, label, detector, base)
    w_sum = sum(report.weak_values[r] for r in coupled_rails)

    det = circuit.detector(detector)

    def full(eps):
        trace = engine.evolve(circuit, dict(base, **{param: eps}))
        return engine.post_select(trace, det.subsystem, detector).imbalance

    def effective(eps):
        return _effective_imbalance(
            circuit, dict(base, **{param: eps}), kerr, probe_rail, report.weak_values
        )

    h = float(eps_small)
    ds_full = (full(h) - full(-h)) / (2 * h)
    ds_eff = (effective(h) - effective(-h)) / (2 * h)
    return ResponseCheck(
        param, h, coupled_rails, w_sum, ds_full, ds_eff, abs(w_sum.imag) > 1e-10
    )
