"""Dense reference evolution.

Materialises every stage as a full joint matrix, multiplies them into a
single circuit matrix and applies it once to the initial vector.  Shares
only ``stage_matrix`` with the rest of the package, not the engine's
in-place rail updates, so it can check the engine.
"""

import numpy as np

from .model import bind_params, stage_matrix


def circuit_matrix(circuit, bindings=None, start=0, stop=None):
    """Product of stage matrices for ``stages[start:stop]`` (later stages on the left)."""
    if bindings is None:
        bindings = bind_params(circuit)
    stop = len(circuit.stages) if stop is None else stop
    u = np.eye(circuit.dim, dtype=complex)
    for k in range(start, stop):
        u = stage_matrix(circuit.stages[k], circuit, bindings, index=k) @ u
    return u


def initial_vector(circuit):
    v = np.zeros(circuit.dim, dtype=complex)
    v[circuit.joint_index(circuit.init_system, circuit.init_probe)] = 1.0
    return v


def final_state(circuit, bindings=None):
    return circuit_matrix(circuit, bindings) @ initial_vector(circuit)


def detector_probability(circuit, detector, bindings=None):
    det = circuit.detector(detector)
    psi = final_state(circuit, bindings).reshape(
        len(circuit.system_basis), len(circuit.probe_basis)
    )
    p = np.abs(psi) ** 2
    if det.subsystem == "system":
        return float(p[circuit.system_basis.index(det.rail)].sum())
    return float(p[:, circuit.probe_basis.index(det.rail)].sum())
