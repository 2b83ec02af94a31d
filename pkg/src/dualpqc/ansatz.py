"""Layered RY/CZ variational form.

Layout for ``n`` qubits and depth ``k``: an initialization layer of RY
rotations, then ``k`` layers each made of a nearest-neighbour CZ ladder
(0-1, 1-2, ..., no wrap-around) followed by one RY per qubit.

Parameters are stored row-major by layer then qubit, so the angle of qubit
``q`` in layer ``l`` (layer 0 is the initialization) sits at ``l*n + q``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .qsim import CZ, RY, Statevector, apply_gate_batch


@dataclass(frozen=True)
class AnsatzSpec:
    num_qubits: int
    depth: int

    def __post_init__(self):
        if self.num_qubits < 1 or self.depth < 0:
            raise DomainError(f"invalid ansatz spec {self}")

    @property
    def param_count(self) -> int:
        return param_count(self)


def param_count(spec: AnsatzSpec) -> int:
    return spec.num_qubits * (spec.depth + 1)


def _check_params(spec, params):
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != param_count(spec):
        raise DomainError(
            f"ansatz with {spec.num_qubits} qubits and depth {spec.depth} takes "
            f"{param_count(spec)} parameters, got {params.shape[-1]}"
        )
    return params


def build_circuit(spec: AnsatzSpec, params) -> list:
    params = _check_params(spec, params)
    n = spec.num_qubits
    gates = [RY(params[q], q) for q in range(n)]
    for layer in range(1, spec.depth + 1):
        gates += [CZ(q, q + 1) for q in range(n - 1)]
        gates += [RY(params[layer * n + q], q) for q in range(n)]
    return gates


def run_ansatz(spec: AnsatzSpec, params, state: Statevector) -> Statevector:
    if state.num_qubits != spec.num_qubits:
        raise DomainError(f"ansatz acts on {spec.num_qubits} qubits, input state has {state.num_qubits}")
    out = run_ansatz_batch(spec, _check_params(spec, params)[None, :], state.amplitudes[None, :])
    return Statevector(spec.num_qubits, out[0])


def run_ansatz_batch(spec: AnsatzSpec, params: np.ndarray, amps: np.ndarray) -> np.ndarray:
    """Evaluate the ansatz for each row pair of ``params`` (B, P) and ``amps`` (B, 2**n).

    Equivalent to ``run_ansatz`` row by row, but each gate is applied once to
    the whole batch.
    """
    params = _check_params(spec, params)
    n = spec.num_qubits
    if amps.shape != (params.shape[0], 2**n):
        raise DomainError(f"amplitude batch shape {amps.shape} does not match {params.shape[0]} x {2**n}")
    # gate kinds and positions come from the circuit template; angles are per row
    template = build_circuit(spec, np.zeros(param_count(spec)))
    slot = 0
    for gate in template:
        if gate.kind == "RY":
            amps = apply_gate_batch(amps, n, gate, angles=params[:, slot])
            slot += 1
        else:
            amps = apply_gate_batch(amps, n, gate)
    return amps
