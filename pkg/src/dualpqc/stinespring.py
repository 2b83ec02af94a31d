"""Explicit 2n-qubit unitary that outputs any 2**n images, orthogonal or not.

Register layout on 2n qubits (qubit 0 = least significant bit)::

    qubits n .. 2n-1   ancilla block  (high bits, left tensor factor)
    qubits 0 .. n-1    image register (low bits, right tensor factor)

The input |0...0>_anc (x) |i>_img is basis index ``i``.  Column ``i`` of the
unitary is |i>_anc (x) |img_i>, where ``img_i`` has amplitudes
``sqrt(I_ij) * exp(1j * phase_ij)``.  These columns are orthonormal because
their ancilla parts are distinct basis states, whatever the images are.
Measuring and discarding the ancilla block leaves pixel distribution
``I_i``.  The remaining columns are completed by Gram-Schmidt.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .qsim import marginal_batch

RESIDUAL_SKIP = 1e-8
UNITARY_TOL = 1e-10
RECOVERY_TOL = 1e-12


@dataclass
class ImageSet:
    intensities: np.ndarray
    phases: np.ndarray = None

    def __post_init__(self):
        I = np.asarray(self.intensities, dtype=float)
        count, width = I.shape if I.ndim == 2 else (0, 0)
        if count < 2 or count != width or count & (count - 1):
            raise DomainError(f"need 2**n images of 2**n pixels, got shape {I.shape}")
        if np.any(I < 0) or np.any(np.abs(I.sum(axis=1) - 1) > 1e-12):
            raise DomainError("each image must be non-negative and sum to 1")
        self.intensities = I
        if self.phases is None:
            self.phases = np.zeros_like(I)
        else:
            self.phases = np.asarray(self.phases, dtype=float)
            if self.phases.shape != I.shape:
                raise DomainError(f"phase shape {self.phases.shape} differs from {I.shape}")

    @property
    def n(self) -> int:
        return int(self.intensities.shape[0]).bit_length() - 1

    def amplitude_vectors(self) -> np.ndarray:
        return np.sqrt(self.intensities) * np.exp(1j * self.phases)


def random_image_set(n: int, rng: np.random.Generator, with_phases=False) -> ImageSet:
    dim = 2**n
    raw = rng.random((dim, dim))
    phases = rng.uniform(0, 2 * np.pi, (dim, dim)) if with_phases else None
    return ImageSet(raw / raw.sum(axis=1, keepdims=True), phases)


def _complete_basis(columns: np.ndarray, dim: int) -> np.ndarray:
    basis = [c for c in columns.T]
    for j in range(dim):
        if len(basis) == dim:
            break
        v = np.zeros(dim, dtype=complex)
        v[j] = 1.0
        for _ in range(2):  # second pass restores orthogonality lost to round-off
            for b in basis:
                v = v - np.vdot(b, v) * b
        norm = np.linalg.norm(v)
        if norm < RESIDUAL_SKIP:
            continue
        basis.append(v / norm)
    if len(basis) != dim:
        raise DomainError(f"orthogonal complement has dimension {len(basis) - columns.shape[1]}, expected {dim - columns.shape[1]}")
    return np.array(basis).T


def build_dilation_unitary(images: ImageSet) -> np.ndarray:
    n = images.n
    dim = 2 ** (2 * n)
    amps = images.amplitude_vectors()
    designated = np.zeros((dim, 2**n), dtype=complex)
    for i in range(2**n):
        anc = np.zeros(2**n)
        anc[i] = 1.0
        designated[:, i] = np.kron(anc, amps[i])
    return _complete_basis(designated, dim)


def unitarity_residual(U) -> float:
    U = np.asarray(U)
    eye = np.eye(U.shape[0])
    return float(max(np.abs(U.conj().T @ U - eye).max(), np.abs(U @ U.conj().T - eye).max()))


def verify_recovery(U, images: ImageSet) -> np.ndarray:
    """Max pixel error per image after applying ``U`` to |0>|i> and discarding the ancillas."""
    n = images.n
    U = np.asarray(U)
    if U.shape != (4**n, 4**n):
        raise DomainError(f"unitary of shape {U.shape} does not act on {2 * n} qubits")
    # no renormalization: a defective U shows up as recovery error
    outputs = U[:, : 2**n].T
    recovered = marginal_batch(np.abs(outputs) ** 2, 2 * n, list(range(n)))
    return np.abs(recovered - images.intensities).max(axis=1)
