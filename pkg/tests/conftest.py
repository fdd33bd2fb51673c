import numpy as np
import pytest

from nestedmzi.model import (
    PROBE,
    SYSTEM,
    BeamSplitter,
    Block,
    Circuit,
    Cut,
    Detector,
    Kerr,
    PhaseShift,
)

ACCEPTANCE_RESULTS = []


def random_circuit(rng, *, max_rails=6, n_stages=10, kerr=True, blocks=True, probe=True):
    """Random two-subsystem circuit with one cut called ``mid``.

    Totals at most ``max_rails`` declared rails across both subsystems.
    """
    n_sys = int(rng.integers(2, max_rails))
    n_probe = int(rng.integers(1, max_rails - n_sys + 1))
    sys_rails = tuple(f"S{i}" for i in range(n_sys))
    probe_rails = tuple(f"Q{i}" for i in range(n_probe))
    params = {"EPS": float(rng.uniform(-np.pi, np.pi)), "T": float(rng.uniform(0.1, 0.9))}

    kinds = ["bs", "bs", "phase"]
    if kerr:
        kinds.append("kerr")
    if blocks:
        kinds.append("block")
    stages = []
    for _ in range(n_stages):
        kind = kinds[rng.integers(len(kinds))]
        sub = SYSTEM if (not probe or n_probe < 2 or rng.random() < 0.6) else PROBE
        rails = sys_rails if sub == SYSTEM else probe_rails
        if kind == "bs" and len(rails) >= 2:
            a, b = rng.choice(len(rails), size=2, replace=False)
            t = "T" if rng.random() < 0.3 else float(rng.uniform(0.1, 0.9))
            stages.append(BeamSplitter(sub, rails[a], rails[b], t))
        elif kind == "kerr":
            eps = "EPS" if rng.random() < 0.5 else float(rng.uniform(-np.pi, np.pi))
            stages.append(Kerr(sys_rails[rng.integers(n_sys)], probe_rails[rng.integers(n_probe)], eps))
        elif kind == "block" and rng.random() < 0.3:
            stages.append(Block(sub, rails[rng.integers(len(rails))]))
        else:
            stages.append(PhaseShift(sub, rails[rng.integers(len(rails))], float(rng.uniform(-np.pi, np.pi))))
    stages.insert(int(rng.integers(0, len(stages) + 1)), Cut("mid"))
    detectors = [Detector(f"D{i}", SYSTEM, r) for i, r in enumerate(sys_rails)]
    detectors += [Detector(f"P{i}", PROBE, r) for i, r in enumerate(probe_rails)]
    return Circuit(
        system_rails=sys_rails,
        probe_rails=probe_rails,
        init_system=sys_rails[0],
        init_probe=probe_rails[0],
        stages=tuple(stages),
        detectors=tuple(detectors),
        params=params,
    )


@pytest.fixture
def criterion():
    """Record an acceptance criterion outcome and fail the test if it did not pass."""

    def check(number, title, ok, detail=""):
        ACCEPTANCE_RESULTS.append((number, title, bool(ok), detail))
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: (r[0], r[1])):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}: {detail}")
