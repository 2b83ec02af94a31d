"""Dual-circuit generator.

PQC1 turns an equal superposition over its ``n1`` qubits into a distribution
``p_g`` over ``2**n`` image indices by measuring ``n`` of them.  PQC2 takes an
index ``i`` loaded as a basis state on its input slots and produces image
``i`` as the marginal distribution over its ``n`` output qubits; the other
qubits act as ancillas and are summed out.

RY, CZ, H and X all have real matrices, so the batched evaluation runs on
real amplitude arrays.

Gradients use the parameter-shift rule, which is exact for RY gates:
``d<f>/dphi_r = (f(phi + pi/2 e_r) - f(phi - pi/2 e_r)) / 2`` for any output
probability ``f``.  All shifted circuits of one gradient are evaluated as one
batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .ansatz import AnsatzSpec, param_count, run_ansatz_batch
from .errors import DomainError
from .qsim import H, X, apply_gate_batch, marginal_batch, sample_from_probabilities

SCORE_FLOOR = 1e-7
SHIFT = np.pi / 2


@dataclass(frozen=True)
class DualPqcConfig:
    """Circuit sizes and qubit roles.

    ``pqc1_measured``, ``pqc2_output`` and ``pqc2_input_slots`` default to the
    lowest ``n`` qubits of their circuit.  In each list the first entry maps
    to the least significant bit.
    """

    n: int = 2
    n1: int = 4
    n2: int = 4
    d_g1: int = 2
    d_g2: int = 16
    pqc1_measured: tuple = None
    pqc2_output: tuple = None
    pqc2_input_slots: tuple = None

    def __post_init__(self):
        for name in ("pqc1_measured", "pqc2_output", "pqc2_input_slots"):
            value = getattr(self, name)
            value = tuple(range(self.n)) if value is None else tuple(int(q) for q in value)
            object.__setattr__(self, name, value)
        if self.n < 1 or self.n > self.n1 or self.n > self.n2:
            raise DomainError(f"need 1 <= n <= n1 and n <= n2, got n={self.n}, n1={self.n1}, n2={self.n2}")
        if self.d_g1 < 0 or self.d_g2 < 0:
            raise DomainError("circuit depths must be >= 0")
        for name, width in (("pqc1_measured", self.n1), ("pqc2_output", self.n2), ("pqc2_input_slots", self.n2)):
            qubits = getattr(self, name)
            if len(qubits) != self.n:
                raise DomainError(f"{name} needs exactly n={self.n} qubits, got {qubits}")
            if len(set(qubits)) != len(qubits) or not all(0 <= q < width for q in qubits):
                raise DomainError(f"{name} must be distinct qubits below {width}, got {qubits}")

    @property
    def spec1(self) -> AnsatzSpec:
        return AnsatzSpec(self.n1, self.d_g1)

    @property
    def spec2(self) -> AnsatzSpec:
        return AnsatzSpec(self.n2, self.d_g2)

    @property
    def num_images(self) -> int:
        return 2**self.n


@dataclass
class GeneratorParams:
    phi1: np.ndarray
    phi2: np.ndarray

    def copy(self):
        return GeneratorParams(self.phi1.copy(), self.phi2.copy())


@dataclass
class GeneratorOutput:
    p_g: np.ndarray
    images: np.ndarray = field(repr=False)


def check_params(config: DualPqcConfig, params: GeneratorParams):
    if len(params.phi1) != param_count(config.spec1) or len(params.phi2) != param_count(config.spec2):
        raise DomainError(
            f"parameter lengths ({len(params.phi1)}, {len(params.phi2)}) do not match "
            f"({param_count(config.spec1)}, {param_count(config.spec2)})"
        )


def _clean(p):
    # round-off can leave entries like -1e-17
    p = np.where(p < 0, 0.0, p)
    return p / p.sum(axis=-1, keepdims=True)


def _maybe_sample(p, shots, rng):
    if not shots:
        return p
    return sample_from_probabilities(p, shots, rng) / shots


@lru_cache(maxsize=None)
def _pqc1_input(n1: int) -> np.ndarray:
    amps = np.zeros((1, 2**n1))
    amps[0, 0] = 1.0
    for q in range(n1):
        amps = apply_gate_batch(amps, n1, H(q))
    amps.setflags(write=False)
    return amps


@lru_cache(maxsize=None)
def _pqc2_inputs(n2: int, slots: tuple) -> np.ndarray:
    """Row i is the basis state with the bits of i written onto ``slots``."""
    rows = []
    for i in range(2 ** len(slots)):
        amps = np.zeros((1, 2**n2))
        amps[0, 0] = 1.0
        for bit, q in enumerate(slots):
            if (i >> bit) & 1:
                amps = apply_gate_batch(amps, n2, X(q))
        rows.append(amps[0])
    out = np.array(rows)
    out.setflags(write=False)
    return out


def _pqc1_batch(config, phi1_rows):
    amps = np.broadcast_to(_pqc1_input(config.n1), (phi1_rows.shape[0], 2**config.n1))
    out = run_ansatz_batch(config.spec1, phi1_rows, amps)
    return marginal_batch(np.abs(out) ** 2, config.n1, config.pqc1_measured)


def _pqc2_batch(config, phi2_rows):
    """Images for every row of ``phi2_rows``: shape (R, 2**n, 2**n)."""
    inputs = _pqc2_inputs(config.n2, config.pqc2_input_slots)
    k = inputs.shape[0]
    rows = np.repeat(phi2_rows, k, axis=0)
    amps = np.tile(inputs, (phi2_rows.shape[0], 1))
    out = run_ansatz_batch(config.spec2, rows, amps)
    probs = marginal_batch(np.abs(out) ** 2, config.n2, config.pqc2_output)
    return probs.reshape(phi2_rows.shape[0], k, -1)


def _shifted(phi):
    """Rows phi + s*e_r for r = 0..P-1, plus shifts first then minus shifts."""
    eye = np.eye(len(phi)) * SHIFT
    return np.vstack([phi + eye, phi - eye])


def pqc1_distribution(config: DualPqcConfig, phi1, shots=0, rng=None) -> np.ndarray:
    phi1 = np.asarray(phi1, dtype=float)
    p = _clean(_pqc1_batch(config, phi1[None, :])[0])
    return _maybe_sample(p, shots, rng)


def pqc2_image(config: DualPqcConfig, phi2, index: int, shots=0, rng=None) -> np.ndarray:
    if not 0 <= index < config.num_images:
        raise DomainError(f"image index {index} out of range for n={config.n}")
    images = pqc2_images(config, phi2)
    return _maybe_sample(images[index], shots, rng)


def pqc2_images(config: DualPqcConfig, phi2) -> np.ndarray:
    phi2 = np.asarray(phi2, dtype=float)
    return _clean(_pqc2_batch(config, phi2[None, :])[0])


def generate(config: DualPqcConfig, params: GeneratorParams, shots=0, rng=None) -> GeneratorOutput:
    """Exact output by default; with ``shots`` > 0 every probability vector is
    replaced by an empirical frequency estimate drawn from ``rng``."""
    check_params(config, params)
    p_g = pqc1_distribution(config, params.phi1)
    images = pqc2_images(config, params.phi2)
    if shots:
        p_g = _maybe_sample(p_g, shots, rng)
        images = _maybe_sample(images, shots, rng)
    return GeneratorOutput(p_g=p_g, images=images)


def mean_image(output: GeneratorOutput) -> np.ndarray:
    return np.asarray(output.p_g) @ np.asarray(output.images)


def _check_scores(scores):
    scores = np.asarray(scores, dtype=float)
    if np.any(~np.isfinite(scores)) or np.any(scores <= 0) or np.any(scores >= 1):
        raise DomainError(f"discriminator scores must lie strictly in (0, 1), got {scores}")
    return np.clip(scores, SCORE_FLOOR, 1 - SCORE_FLOOR)


def pqc1_jacobian(config: DualPqcConfig, phi1, shots=0, rng=None) -> np.ndarray:
    """d p_g / d phi1 as a (P1, 2**n) array, by parameter shift."""
    phi1 = np.asarray(phi1, dtype=float)
    p = _maybe_sample(_pqc1_batch(config, _shifted(phi1)), shots, rng)
    half = len(phi1)
    return 0.5 * (p[:half] - p[half:])


def pqc2_jacobian(config: DualPqcConfig, phi2, shots=0, rng=None) -> np.ndarray:
    """d I_ij / d phi2 as a (P2, 2**n, 2**n) array, by parameter shift."""
    phi2 = np.asarray(phi2, dtype=float)
    images = _maybe_sample(_pqc2_batch(config, _shifted(phi2)), shots, rng)
    half = len(phi2)
    return 0.5 * (images[:half] - images[half:])


def grad_phi1(config: DualPqcConfig, params: GeneratorParams, disc_scores, shots=0, rng=None) -> np.ndarray:
    """Gradient of -sum_i p_g^i log D(I_i) with respect to phi1."""
    scores = _check_scores(disc_scores)
    jac = pqc1_jacobian(config, params.phi1, shots, rng)
    return -jac @ np.log(scores)


def grad_phi2(
    config: DualPqcConfig, params: GeneratorParams, disc_scores, disc_input_grads, shots=0, rng=None, p_g=None
) -> np.ndarray:
    """Gradient of -sum_i p_g^i log D(I_i) with respect to phi2.

    ``disc_input_grads[i, j]`` is dD/dI_ij evaluated at image ``i``.  ``p_g``
    may be passed in to avoid re-running PQC1.
    """
    scores = _check_scores(disc_scores)
    dD = np.asarray(disc_input_grads, dtype=float)
    if p_g is None:
        p_g = pqc1_distribution(config, params.phi1)
    jac = pqc2_jacobian(config, params.phi2, shots, rng)
    weights = (np.asarray(p_g) / scores)[:, None] * dD
    return -np.einsum("rij,ij->r", jac, weights)
