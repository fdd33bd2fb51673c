"""The nested interferometer with a probe interferometer, and its variants.

System rails: ``A`` (outer arm, leads to detector D), ``B`` and ``C`` (the
inner interferometer's arms).  ``B`` doubles as the entrance leg before
the first inner splitter and as the dark exit leg after the second.  Probe
rails ``P1`` (the arm crossing the Kerr medium) and ``P2``.

Parameters every scenario declares:

    EPS        Kerr phase on the inner arms
    T1, T2, T3 transmittance of the outer, inner and probe splitter pairs
    PROBE_PHI  phase bias on the uncoupled probe arm

plus ``DELTA`` (detuned: extra phase on the C coupling) and ``EPS_A``
(outer_arms: coupling on arm A).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import engine, tsvf
from .engine import ConditionalProbeStats, fmt
from .errors import InvalidCircuitError
from .model import (
    PROBE,
    SYSTEM,
    BeamSplitter,
    Block,
    Circuit,
    Cut,
    Detector,
    Kerr,
    PhaseShift,
    bind_params,
    validate_circuit,
)
from .tsvf import ResponseCheck, WeakValueReport

INNER_CUT = "inner"
SELECT = "D"
# Probe bias at which the imbalance responds linearly to a small phase.
QUADRATURE = math.pi / 2
RESPONSE_STEP = 1e-4


class ScenarioKind(str, enum.Enum):
    NOMINAL = "nominal"
    BLOCKED_B = "blocked_b"
    BLOCKED_C = "blocked_c"
    DETUNED = "detuned"
    SINGLE_ARM_B = "single_arm_b"
    SINGLE_ARM_C = "single_arm_c"
    OUTER_ARMS = "outer_arms"

    def __str__(self):
        return self.value


def _kind(kind):
    try:
        return ScenarioKind(kind)
    except ValueError:
        valid = ", ".join(k.value for k in ScenarioKind)
        raise ValueError(f"unknown scenario {kind!r}; expected one of {valid}") from None


def build_scenario(
    kind,
    eps: float = 0.0,
    *,
    delta: float | None = None,
    eps_a: float | None = None,
    t_outer: float = 0.5,
    t_inner: float = 0.5,
    t_probe: float = 0.5,
    probe_phi: float = 0.0,
    leg_cuts: bool = False,
    extra_couplings: Sequence[tuple[str, float | str]] = (),
) -> Circuit:
    """Circuit for one scenario.

    ``leg_cuts`` adds cuts ``entrance`` (before the first inner splitter)
    and ``exit`` (after the second).  ``extra_couplings`` appends further
    Kerr stages ``(system_rail, eps)`` to the coupling block.
    """
    kind = _kind(kind)
    for name, value in (("eps", eps), ("delta", delta), ("eps_a", eps_a)):
        if value is not None and not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
    if delta is not None and kind is not ScenarioKind.DETUNED:
        raise ValueError(f"delta only applies to the detuned scenario, not {kind}")
    if eps_a is not None and kind is not ScenarioKind.OUTER_ARMS:
        raise ValueError(f"eps_a only applies to the outer_arms scenario, not {kind}")

    params = {"EPS": float(eps), "T1": t_outer, "T2": t_inner, "T3": t_probe, "PROBE_PHI": probe_phi}

    couplings = []
    if kind is ScenarioKind.OUTER_ARMS:
        params["EPS_A"] = float(eps_a or 0.0)
        couplings.append(Kerr("A", "P1", "EPS_A"))
    if kind is ScenarioKind.SINGLE_ARM_B:
        couplings.append(Kerr("B", "P1", "EPS"))
    elif kind is ScenarioKind.SINGLE_ARM_C:
        couplings.append(Kerr("C", "P1", "EPS"))
    else:
        couplings += [Kerr("B", "P1", "EPS"), Kerr("C", "P1", "EPS")]
    if kind is ScenarioKind.DETUNED:
        params["DELTA"] = float(delta or 0.0)
        couplings.append(Kerr("C", "P1", "DELTA"))
    couplings += [Kerr(rail, "P1", e) for rail, e in extra_couplings]

    blocks = {
        ScenarioKind.BLOCKED_B: [Block(SYSTEM, "B")],
        ScenarioKind.BLOCKED_C: [Block(SYSTEM, "C")],
    }.get(kind, [])

    stages = [
        BeamSplitter(PROBE, "P1", "P2", "T3"),
        PhaseShift(PROBE, "P2", "PROBE_PHI"),
        BeamSplitter(SYSTEM, "A", "B", "T1"),
    ]
    if leg_cuts:
        stages.append(Cut("entrance"))
    stages += [BeamSplitter(SYSTEM, "B", "C", "T2"), Cut(INNER_CUT)]
    stages += blocks + couplings
    stages.append(BeamSplitter(SYSTEM, "B", "C", "T2"))
    if leg_cuts:
        stages.append(Cut("exit"))
    stages += [
        BeamSplitter(SYSTEM, "A", "B", "T1"),
        BeamSplitter(PROBE, "P1", "P2", "T3"),
    ]

    circuit = Circuit(
        system_rails=("A", "B", "C"),
        probe_rails=("P1", "P2"),
        init_system="A",
        init_probe="P1",
        stages=tuple(stages),
        detectors=(
            Detector("D", SYSTEM, "A"),
            Detector("DBAR", SYSTEM, "B"),
            Detector("DP1", PROBE, "P1"),
            Detector("DP2", PROBE, "P2"),
        ),
        params=params,
        dark_port="B",
    )
    report = validate_circuit(circuit)
    if not report.ok:
        raise InvalidCircuitError(report.diagnostics)
    return circuit


def coupled_rails(circuit: Circuit) -> tuple[str, ...]:
    seen = []
    for s in circuit.stages:
        if isinstance(s, Kerr) and s.system_rail not in seen:
            seen.append(s.system_rail)
    return tuple(seen)


@dataclass(frozen=True)
class ScenarioReport:
    kind: str
    bindings: dict
    p_select: float
    dark_mag: float
    stats: ConditionalProbeStats
    weak_values: WeakValueReport | None
    response: ResponseCheck | None = None

    @property
    def p_D(self):
        return self.p_select

    def to_text(self) -> str:
        """Flat ``key=value`` block, one entry per line."""
        out = [f"kind={self.kind}", f"select={self.stats.selected}"]
        out += [f"param.{k}={fmt(v)}" for k, v in sorted(self.bindings.items())]
        out += [f"p_select={fmt(self.p_select)}", f"dark_mag={fmt(self.dark_mag)}"]
        out += [f"cond.{k}={fmt(v)}" for k, v in self.stats.detector_probs.items()]
        out += [f"cond_rail.{k}={fmt(v)}" for k, v in self.stats.rail_probs.items()]
        out.append(f"s_imbalance={fmt(self.stats.imbalance)}")
        if self.weak_values is not None:
            wv = self.weak_values
            out += [f"wv.cut={wv.cut_label}",
                    f"wv.overlap_re={fmt(wv.overlap.real)}",
                    f"wv.overlap_im={fmt(wv.overlap.imag)}"]
            for rail, v in wv.weak_values.items():
                out += [f"wv.{rail}.re={fmt(v.real)}", f"wv.{rail}.im={fmt(v.imag)}"]
            total = wv.total()
            out += [f"wv.sum.re={fmt(total.real)}", f"wv.sum.im={fmt(total.imag)}"]
        if self.response is not None:
            r = self.response
            out += [f"response.param={r.param}",
                    f"response.step={fmt(r.step)}",
                    f"response.rails={'+'.join(r.coupled_rails)}",
                    f"response.weak_value_re={fmt(r.weak_value_sum.real)}",
                    f"response.weak_value_im={fmt(r.weak_value_sum.imag)}",
                    f"response.ds_full={fmt(r.ds_full)}",
                    f"response.ds_effective={fmt(r.ds_effective)}",
                    f"response.difference={fmt(r.difference)}",
                    f"response.non_real={str(r.non_real).lower()}"]
        return "\n".join(out) + "\n"

    def numbers(self):
        """Report content without the scenario name, for comparing scenarios."""
        return self.to_text().split("\n", 1)[1]


def report_circuit(
    circuit: Circuit,
    overrides: Mapping[str, float] | None = None,
    *,
    select: str = SELECT,
    cut: str | None = INNER_CUT,
    kind: str = "circuit",
    response: bool = False,
) -> ScenarioReport:
    """Evolve, post-select on ``select`` and gather weak values and response.

    Weak values are skipped when ``cut`` is absent from the circuit or the
    detector is a probe detector.  ``response`` adds the first-order pointer
    comparison, evaluated at quadrature probe bias.
    """
    bindings = bind_params(circuit, overrides)
    trace = engine.evolve(circuit, bindings)
    det = engine._detector(circuit, select)
    stats = engine.post_select(trace, det.subsystem, select)
    wv = None
    if cut is not None and circuit.cut_index(cut) is not None and det.subsystem == SYSTEM:
        wv = tsvf.weak_value_report(circuit, cut, select, bindings)
    check = None
    if response:
        biased = dict(bindings)
        if "PROBE_PHI" in biased:
            biased["PROBE_PHI"] = QUADRATURE
        check = tsvf.first_order_response_check(
            circuit, coupled_rails(circuit), select, RESPONSE_STEP, bindings=biased
        )
    return ScenarioReport(
        kind, bindings, stats.post_select_prob, engine.dark_magnitude(trace), stats, wv, check
    )


_RESPONSE_KINDS = {ScenarioKind.NOMINAL, ScenarioKind.SINGLE_ARM_B, ScenarioKind.SINGLE_ARM_C}


def run_scenario(kind, eps: float = 0.0, *, overrides: Mapping[str, float] | None = None,
                 select: str = SELECT, **options) -> ScenarioReport:
    """Build, evolve and report one scenario, post-selected on ``select``."""
    kind = _kind(kind)
    circuit = build_scenario(kind, eps, **options)
    return report_circuit(
        circuit, overrides, select=select, kind=kind.value,
        response=kind in _RESPONSE_KINDS and select == SELECT,
    )


def scenario_names():
    return [k.value for k in ScenarioKind]
