"""Dense statevector simulation for the RY/CZ circuits used by the generator.

Bit order: qubit 0 is the least significant bit of a basis index, so for
three qubits the index of |q2 q1 q0> is ``4*q2 + 2*q1 + q0``.  Every module
in the package uses this convention.

Besides the single-state API (``Statevector``, ``apply_gate``, ...) the module
exposes batched kernels that act on an ``(B, 2**n)`` array of amplitudes with
per-row rotation angles.  The generator uses these to evaluate all
parameter-shifted circuits of one gradient in a single sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

NORM_TOL = 1e-10
MAX_QUBITS = 20


@dataclass(frozen=True)
class Statevector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise DomainError(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.num_qubits:
            raise DomainError(
                f"expected {2**self.num_qubits} amplitudes for {self.num_qubits} qubits, got {amps.shape[0]}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 2**self.num_qubits


@dataclass(frozen=True)
class GateOp:
    """One gate: ``kind`` in {"RY", "CZ", "X", "H"}.

    ``qubits`` is ``(target,)`` for single-qubit gates and ``(control, target)``
    for CZ.  ``angle`` is in radians and only meaningful for RY.
    """

    kind: str
    qubits: tuple
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in ("RY", "CZ", "X", "H"):
            raise DomainError(f"unsupported gate kind {self.kind!r}")
        arity = 2 if self.kind == "CZ" else 1
        if len(self.qubits) != arity:
            raise DomainError(f"{self.kind} acts on {arity} qubit(s), got {self.qubits}")
        if self.kind == "CZ" and self.qubits[0] == self.qubits[1]:
            raise DomainError("CZ control and target must differ")

    def __repr__(self):
        if self.kind == "RY":
            return f"RY({self.angle!r})@{self.qubits[0]}"
        return f"{self.kind}{self.qubits}"


def RY(angle: float, target: int) -> GateOp:
    return GateOp("RY", (int(target),), float(angle))


def CZ(control: int, target: int) -> GateOp:
    return GateOp("CZ", (int(control), int(target)))


def X(target: int) -> GateOp:
    return GateOp("X", (int(target),))


def H(target: int) -> GateOp:
    return GateOp("H", (int(target),))


def basis_state(num_qubits: int, index: int) -> Statevector:
    if not 0 <= index < 2**num_qubits:
        raise DomainError(f"basis index {index} out of range for {num_qubits} qubits")
    amps = np.zeros(2**num_qubits, dtype=complex)
    amps[index] = 1.0
    return Statevector(num_qubits, amps)


def _check_qubits(gate: GateOp, num_qubits: int):
    for q in gate.qubits:
        if not 0 <= q < num_qubits:
            raise DomainError(f"{gate!r}: qubit {q} invalid for a {num_qubits}-qubit state")


@lru_cache(maxsize=None)
def _cz_signs(num_qubits: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(2**num_qubits)
    both = ((idx >> a) & 1) & ((idx >> b) & 1)
    signs = np.where(both == 1, -1.0, 1.0)
    signs.setflags(write=False)
    return signs


def _apply_1q(amps, num_qubits, target, m00, m01, m10, m11):
    # m** are scalars or per-row arrays of shape (B,)
    batch = amps.shape[0]
    view = amps.reshape(batch, 2 ** (num_qubits - 1 - target), 2, 2**target)
    m00, m01, m10, m11 = (np.reshape(m, (-1, 1, 1)) if np.ndim(m) else m for m in (m00, m01, m10, m11))
    a0 = view[:, :, 0, :]
    a1 = view[:, :, 1, :]
    out = np.empty_like(view)
    out[:, :, 0, :] = m00 * a0 + m01 * a1
    out[:, :, 1, :] = m10 * a0 + m11 * a1
    return out.reshape(batch, -1)


def apply_gate_batch(amps: np.ndarray, num_qubits: int, gate: GateOp, angles=None) -> np.ndarray:
    """Apply ``gate`` to every row of ``amps`` (shape ``(B, 2**n)``).

    For RY, ``angles`` (shape ``(B,)``) overrides ``gate.angle`` row by row.
    Returns a new array; the input is not modified.
    """
    _check_qubits(gate, num_qubits)
    if gate.kind == "RY":
        theta = gate.angle if angles is None else np.asarray(angles, dtype=float)
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        return _apply_1q(amps, num_qubits, gate.qubits[0], c, -s, s, c)
    if gate.kind == "CZ":
        return amps * _cz_signs(num_qubits, *gate.qubits)
    if gate.kind == "X":
        view = amps.reshape(amps.shape[0], 2 ** (num_qubits - 1 - gate.qubits[0]), 2, -1)
        return view[:, :, ::-1, :].reshape(amps.shape[0], -1).copy()
    r = 1 / np.sqrt(2)
    return _apply_1q(amps, num_qubits, gate.qubits[0], r, r, r, -r)


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    amps = apply_gate_batch(state.amplitudes[None, :], state.num_qubits, gate)
    return Statevector(state.num_qubits, amps[0])


def run_circuit(state: Statevector, gates: Iterable[GateOp]) -> Statevector:
    amps = state.amplitudes[None, :]
    for gate in gates:
        amps = apply_gate_batch(amps, state.num_qubits, gate)
    return Statevector(state.num_qubits, amps[0])


def probabilities(state: Statevector) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def _check_kept(kept: Sequence[int], num_qubits: int):
    kept = [int(q) for q in kept]
    if len(set(kept)) != len(kept):
        raise DomainError(f"duplicate qubit in kept set {kept}")
    for q in kept:
        if not 0 <= q < num_qubits:
            raise DomainError(f"kept qubit {q} invalid for {num_qubits} qubits")
    return kept


def marginal_batch(probs: np.ndarray, num_qubits: int, kept: Sequence[int]) -> np.ndarray:
    """Sum ``(B, 2**n)`` outcome probabilities over every qubit not in ``kept``.

    The result has shape ``(B, 2**len(kept))``; ``kept[0]`` becomes the least
    significant bit of the marginal index.
    """
    kept = _check_kept(kept, num_qubits)
    batch = probs.shape[0]
    tensor = probs.reshape((batch,) + (2,) * num_qubits)
    axis_of = {q: num_qubits - q for q in range(num_qubits)}
    dropped = tuple(axis_of[q] for q in range(num_qubits) if q not in kept)
    reduced = tensor.sum(axis=dropped) if dropped else tensor
    # surviving axes are in descending qubit order; reorder to kept[-1], ..., kept[0]
    survivors = sorted(kept, reverse=True)
    order = [0] + [1 + survivors.index(q) for q in reversed(kept)]
    return np.transpose(reduced, order).reshape(batch, -1)


def marginal_probabilities(state: Statevector, kept_qubits: Sequence[int]) -> np.ndarray:
    return marginal_batch(probabilities(state)[None, :], state.num_qubits, kept_qubits)[0]


def sample_from_probabilities(p: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts for ``shots`` draws from ``p`` (rows if 2-D)."""
    if shots < 1:
        raise DomainError(f"shots must be >= 1, got {shots}")
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    p = p / p.sum(axis=-1, keepdims=True)
    return rng.multinomial(shots, p)


def sample_counts(state: Statevector, kept_qubits: Sequence[int], shots: int, rng_seed: int) -> dict:
    p = marginal_probabilities(state, kept_qubits)
    counts = sample_from_probabilities(p, shots, np.random.default_rng(rng_seed))
    return {int(k): int(c) for k, c in enumerate(counts) if c}
