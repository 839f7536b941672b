"""Dense Hermitian linear algebra: validated operators, eigendecompositions
and spectral matrix functions.

State vectors are plain 1-D complex numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegeneracyError, ValidationError

HERMITIAN_ATOL = 1e-12
DEGENERACY_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def check_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL) -> None:
    """Raise ValidationError naming the worst offending (i, j) pair."""
    dev = np.abs(m - m.conj().T)
    worst = float(dev.max()) if dev.size else 0.0
    if worst > atol:
        i, j = np.unravel_index(int(np.argmax(dev)), dev.shape)
        raise ValidationError(
            f"operator is not Hermitian: |H[{i},{j}] - conj(H[{j},{i}])| = {worst:.3e} "
            f"exceeds {atol:.0e} (H[{i},{j}]={m[i, j]!r}, H[{j},{i}]={m[j, i]!r})"
        )


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] < 2:
            raise ValidationError("operator dimension must be at least 2")
        check_hermitian(m)
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def norm(self) -> float:
        """Spectral norm."""
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix))))

    def __add__(self, other: HermitianOperator) -> HermitianOperator:
        return HermitianOperator(self.matrix + other.matrix)

    def __sub__(self, other: HermitianOperator) -> HermitianOperator:
        return HermitianOperator(self.matrix - other.matrix)

    def __mul__(self, c: float) -> HermitianOperator:
        return HermitianOperator(self.matrix * float(c))

    __rmul__ = __mul__

    def __matmul__(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def allclose(self, other: HermitianOperator, atol: float = 1e-12) -> bool:
        return self.dim == other.dim and np.allclose(self.matrix, other.matrix, rtol=0, atol=atol)


def canonicalize_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real positive.

    Works on (d, k) matrices and on stacks (..., d, k).
    """
    idx = np.argmax(np.abs(vecs), axis=-2)
    lead = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    phase = lead / np.abs(lead)
    return vecs / phase


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _readonly(np.asarray(self.eigenvalues, dtype=float)))
        object.__setattr__(self, "eigenvectors", _readonly(np.asarray(self.eigenvectors, dtype=complex)))

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def vector(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, k].copy()

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        """Amplitudes <E_k|psi>."""
        return self.eigenvectors.conj().T @ psi


def eig(h: HermitianOperator | np.ndarray) -> SpectralDecomposition:
    m = h.matrix if isinstance(h, HermitianOperator) else np.asarray(h, dtype=complex)
    if not isinstance(h, HermitianOperator):
        check_hermitian(m)
    w, v = np.linalg.eigh(m)
    return SpectralDecomposition(w, canonicalize_phases(v))


def apply_matrix_function(
    h: HermitianOperator | SpectralDecomposition,
    f: Callable[[np.ndarray], np.ndarray],
    psi: np.ndarray,
) -> np.ndarray:
    """Return sum_k f(E_k) <E_k|psi> |E_k>; the result is not renormalized."""
    dec = h if isinstance(h, SpectralDecomposition) else eig(h)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (dec.dim,):
        raise ValidationError(f"state has shape {psi.shape}, operator has dim {dec.dim}")
    fk = np.asarray(f(dec.eigenvalues), dtype=complex)
    return dec.eigenvectors @ (fk * dec.coefficients(psi))


def spectral_gap(dec: SpectralDecomposition, k: int, tol: float = DEGENERACY_TOL) -> float:
    if not 0 <= k < dec.dim:
        raise IndexError(f"level {k} out of range for dim {dec.dim}")
    others = np.delete(dec.eigenvalues, k)
    gap = float(np.min(np.abs(others - dec.eigenvalues[k])))
    if gap < tol:
        raise DegeneracyError(f"level {k} is degenerate (gap {gap:.3e} < {tol:.0e})")
    return gap


def normalize(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    n = np.linalg.norm(psi)
    if n == 0:
        raise ValidationError("cannot normalize the zero vector")
    return psi / n


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (a + a.conj().T) / 2
