import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_circuit
from nestedmzi import oracle
from nestedmzi.engine import detector_probability, evolve
from nestedmzi.errors import UnknownCutError, ZeroOverlap
from nestedmzi.model import SYSTEM, BeamSplitter, Circuit, Cut, Detector, Kerr, PhaseShift
from nestedmzi.scenarios import build_scenario
from nestedmzi.tsvf import (
    backward_functional,
    first_order_response_check,
    forward_state,
    strip_couplings,
    weak_value,
    weak_value_report,
)

R2 = 1 / math.sqrt(2)


def system_oracle(circuit, cut, detector):
    """Forward state and backward row straight from the dense joint matrices.

    Uses the probe-inclusive joint space of the stripped circuit and reads
    off the init-probe column, independent of the system-only products.
    """
    c = strip_couplings(circuit)
    k = c.cut_index(cut)
    n_p = len(c.probe_basis)
    j = c.probe_basis.index(c.init_probe)
    before = oracle.circuit_matrix(c, None, 0, k)
    after = oracle.circuit_matrix(c, None, k + 1)
    psi = (before @ oracle.initial_vector(c)).reshape(-1, n_p)[:, j]
    det = c.detector(detector)
    row = after[c.joint_index(det.rail, c.init_probe)].reshape(-1, n_p)[:, j]
    return psi, row


class TestStrip:
    def test_nominal(self):
        c = strip_couplings(build_scenario("nominal", 0.3))
        assert [type(s).__name__ for s in c.stages] == ["BeamSplitter"] * 2 + ["Cut"] + ["BeamSplitter"] * 2
        assert all(s.subsystem == SYSTEM for s in c.stages if isinstance(s, BeamSplitter))
        assert c.detectors == build_scenario("nominal").detectors

    def test_idempotent(self):
        c = build_scenario("outer_arms", 0.1, eps_a=0.2)
        once = strip_couplings(c)
        assert strip_couplings(once) == once

    def test_no_couplings(self):
        c = Circuit(("A", "B"), ("P",), "A", "P",
                    (BeamSplitter(SYSTEM, "A", "B", 0.3), Cut("x")), (Detector("D", SYSTEM, "A"),))
        assert strip_couplings(c) == c


class TestForwardBackward:
    def test_forward_inner(self):
        psi = forward_state(build_scenario("nominal"), "inner")
        np.testing.assert_allclose(psi, [R2, 0.5j, -0.5], atol=1e-15)
        ref, _ = system_oracle(build_scenario("nominal"), "inner", "D")
        np.testing.assert_allclose(psi, ref, atol=1e-15)

    def test_forward_before_everything(self):
        c = Circuit(("A", "B"), ("P",), "A", "P",
                    (Cut("start"), BeamSplitter(SYSTEM, "A", "B", 0.3)), (Detector("D", SYSTEM, "A"),))
        np.testing.assert_array_equal(forward_state(c, "start"), [1, 0])

    def test_forward_norm(self):
        assert np.linalg.norm(forward_state(build_scenario("detuned", 0.5, delta=0.1), "inner")) == pytest.approx(1.0)

    def test_backward_inner(self):
        c = build_scenario("nominal")
        row = backward_functional(c, "inner", "D")
        np.testing.assert_allclose(row, [R2, 0.5j, -0.5], atol=1e-15)
        _, ref = system_oracle(c, "inner", "D")
        np.testing.assert_allclose(row, ref, atol=1e-15)

    def test_backward_after_everything(self):
        c = Circuit(("A", "B"), ("P",), "A", "P",
                    (BeamSplitter(SYSTEM, "A", "B", 0.3), Cut("end")), (Detector("D", SYSTEM, "B"),))
        np.testing.assert_array_equal(backward_functional(c, "end", "D"), [0, 1])

    def test_functional_reproduces_detector_amplitude(self):
        c = build_scenario("nominal", 0.0)
        amp = backward_functional(c, "inner", "D") @ forward_state(c, "inner")
        final = evolve(strip_couplings(c)).final
        assert amp == pytest.approx(final.amplitude("A", "P1"), abs=1e-12)

    def test_unknown_cut(self):
        with pytest.raises(UnknownCutError):
            forward_state(build_scenario("nominal"), "nosuch")


class TestWeakValues:
    def test_nominal_table(self):
        c = build_scenario("nominal")
        assert weak_value(c, "inner", "D", "A") == pytest.approx(1, abs=1e-12)
        assert weak_value(c, "inner", "D", "B") == pytest.approx(-0.5, abs=1e-12)
        assert weak_value(c, "inner", "D", "C") == pytest.approx(0.5, abs=1e-12)
        assert abs(weak_value(c, "inner", "D", ["B", "C"])) <= 1e-12

    def test_dark_legs(self):
        c = build_scenario("nominal", leg_cuts=True)
        assert abs(weak_value(c, "entrance", "D", "B")) <= 1e-12
        assert abs(weak_value(c, "exit", "D", "B")) <= 1e-12

    def test_report(self):
        rep = weak_value_report(build_scenario("nominal"), "inner", "D")
        expect = {"A": 1, "B": -0.5, "C": 0.5, "sink": 0}
        assert set(rep.weak_values) == set(expect)
        for rail, value in expect.items():
            assert rep.weak_values[rail] == pytest.approx(value, abs=1e-12)
        assert rep.total() == pytest.approx(1, abs=1e-12)
        assert rep.overlap == pytest.approx(0.5, abs=1e-12)
        assert rep.eps_stripped

    def test_report_independent_of_strength(self):
        a = weak_value_report(build_scenario("nominal", 0.0), "inner", "D")
        b = weak_value_report(build_scenario("nominal", 0.3), "inner", "D")
        assert a == b

    def test_overlap_matches_engine(self):
        c = build_scenario("blocked_b", 0.4)
        rep = weak_value_report(c, "inner", "D")
        p = detector_probability(evolve(strip_couplings(c)), "D")
        assert abs(rep.p_select - p) <= 1e-12

    def test_blocked_report_includes_sink(self):
        rep = weak_value_report(build_scenario("blocked_b"), "inner", "D")
        assert "sink" in rep.weak_values
        assert rep.total() == pytest.approx(1, abs=1e-10)

    def test_zero_overlap(self):
        c = Circuit(("A", "B"), ("P",), "A", "P", (Cut("x"),), (Detector("D", SYSTEM, "B"),))
        with pytest.raises(ZeroOverlap):
            weak_value(c, "x", "D", "A")

    def test_csv(self):
        text = weak_value_report(build_scenario("nominal"), "inner", "D").to_csv()
        lines = text.splitlines()
        assert lines[0] == "cut,detector,rail,wv_re,wv_im,overlap_re,overlap_im,p_select"
        assert [ln.split(",")[2] for ln in lines[1:]] == ["A", "B", "C", "sink", "sum"]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), data=st.data())
def test_completeness_and_additivity(seed, data):
    c = random_circuit(np.random.default_rng(seed), kerr=False, probe=False)
    det = data.draw(st.sampled_from([d.name for d in c.detectors if d.subsystem == SYSTEM]))
    try:
        rep = weak_value_report(c, "mid", det)
    except ZeroOverlap:
        return
    if abs(rep.overlap) < 1e-6:
        return
    assert abs(rep.total() - 1) <= 1e-10
    basis = strip_couplings(c).system_basis
    subset = data.draw(st.lists(st.sampled_from(basis), unique=True, min_size=1))
    union = weak_value(c, "mid", det, subset)
    assert abs(union - sum(rep.weak_values[r] for r in subset)) <= 1e-12


class TestResponse:
    def test_single_arm_matches_weak_value_model(self):
        c = build_scenario("single_arm_b", probe_phi=math.pi / 2)
        r = first_order_response_check(c, ["B"], "D", 1e-4)
        assert r.weak_value_sum == pytest.approx(-0.5, abs=1e-12)
        assert r.difference <= 1e-6
        assert abs(r.ds_full) > 0.1
        assert not r.non_real

    def test_equal_arms_cancel(self):
        c = build_scenario("nominal", probe_phi=math.pi / 2)
        r = first_order_response_check(c, ["B", "C"], "D", 1e-4)
        assert abs(r.weak_value_sum) <= 1e-12
        assert abs(r.ds_full) <= 1e-10
        assert abs(r.ds_effective) <= 1e-10

    def test_unbiased_probe_has_no_first_order_slope(self):
        r = first_order_response_check(build_scenario("single_arm_b"), ["B"], "D", 1e-4)
        assert abs(r.ds_full) <= 1e-8
        assert abs(r.ds_effective) <= 1e-8

    def test_complex_weak_value_flagged(self):
        # an unbalanced inner splitter plus a phase makes W_B complex
        c = build_scenario("single_arm_b", t_inner=0.3, probe_phi=math.pi / 2)
        stages = list(c.stages)
        stages.insert(c.cut_index("inner"), PhaseShift(SYSTEM, "C", 0.7))
        c = dataclasses.replace(c, stages=tuple(stages))
        r = first_order_response_check(c, ["B"], "D", 1e-4)
        assert r.non_real
        assert r.difference <= 1e-6

    def test_zero_step(self):
        with pytest.raises(ValueError):
            first_order_response_check(build_scenario("single_arm_b"), ["B"], "D", 0.0)

    def test_rails_must_cover_couplings(self):
        with pytest.raises(ValueError):
            first_order_response_check(build_scenario("nominal"), ["B"], "D", 1e-4)

    def test_needs_couplings(self):
        c = strip_couplings(build_scenario("nominal"))
        with pytest.raises(ValueError):
            first_order_response_check(c, ["B"], "D", 1e-4)

    def test_kerr_stage_order_does_not_matter(self):
        c = build_scenario("single_arm_b", probe_phi=math.pi / 2, extra_couplings=[("C", 0.0)])
        r = first_order_response_check(c, ["B", "C"], "D", 1e-4)
        assert r.difference <= 1e-6
        assert isinstance(c.stages[c.cut_index("inner") + 2], Kerr)
