"""Linearly interpolated Hamiltonian families and their text file format."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .operators import HermitianOperator

FILE_HEADER = "adiaspeed-hamiltonian v1"

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


@dataclass(frozen=True, eq=False)
class InterpolatedHamiltonian:
    """H(s) = h_i + s (h_f - h_i) for s in [0, 1]."""

    h_i: HermitianOperator
    h_f: HermitianOperator
    label: str = ""

    def __post_init__(self):
        if self.h_i.dim != self.h_f.dim:
            raise ValidationError(f"dimension mismatch: h_i is {self.h_i.dim}, h_f is {self.h_f.dim}")
        object.__setattr__(self, "_diff", self.h_f.matrix - self.h_i.matrix)

    @property
    def dim(self) -> int:
        return self.h_i.dim

    def at(self, s: float) -> HermitianOperator:
        if not 0.0 <= s <= 1.0:
            raise ValidationError(f"interpolation parameter s={s!r} outside [0, 1]")
        if s == 0.0:
            return self.h_i
        if s == 1.0:
            return self.h_f
        return HermitianOperator(self.matrix_at(s))

    def matrix_at(self, s):
        """Raw matrix H(s); vectorized over an array of s (no validation)."""
        s = np.asarray(s, dtype=float)
        return self.h_i.matrix + s[..., None, None] * self._diff

    def s_derivative(self) -> HermitianOperator:
        return HermitianOperator(self._diff)

    def derivative_norm(self) -> float:
        """Spectral norm of h_f - h_i."""
        return float(np.max(np.abs(np.linalg.eigvalsh(self._diff))))

    def max_norm(self) -> float:
        # the spectral norm is convex along an affine path, so endpoints bound it
        return max(self.h_i.norm(), self.h_f.norm())


def grover_fields(n_items: int, s):
    """Bloch field components (v_z, v_x) of the two-level Grover reduction."""
    n = float(n_items)
    s = np.asarray(s, dtype=float)
    v_z = 1.0 - 2.0 * (1.0 - s) * (1.0 - 1.0 / n)
    v_x = (1.0 - s) * (2.0 / math.sqrt(n)) * math.sqrt(1.0 - 1.0 / n)
    return v_z, v_x


def grover_gap(n_items: int, s):
    v_z, v_x = grover_fields(n_items, s)
    return np.hypot(v_z, v_x)


def grover_effective(n_items: int) -> InterpolatedHamiltonian:
    """Two-level Grover search Hamiltonian in the {|m>, |m_perp>} basis.

    H(s) = I/2 - (v_z Z + v_x X)/2. Both fields are affine in s, so the pair of
    endpoint operators reproduces H(s) exactly under linear interpolation.
    """
    if n_items < 2:
        raise ValidationError(f"Grover search needs N >= 2 items, got {n_items}")

    def h(s):
        v_z, v_x = grover_fields(n_items, s)
        return IDENTITY_2 / 2 - (v_z * PAULI_Z + v_x * PAULI_X) / 2

    return InterpolatedHamiltonian(
        HermitianOperator(h(0.0)), HermitianOperator(h(1.0)), label=f"grover-effective N={n_items}"
    )


def grover_full(n_qubits: int, marked: int = 0) -> InterpolatedHamiltonian:
    if not 1 <= n_qubits <= 10:
        raise ValidationError(f"n_qubits={n_qubits} outside the dense-feasible range 1..10")
    dim = 2**n_qubits
    if not 0 <= marked < dim:
        raise ValidationError(f"marked index {marked} outside 0..{dim - 1}")
    plus = np.full(dim, 1 / math.sqrt(dim), dtype=complex)
    mark = np.zeros(dim, dtype=complex)
    mark[marked] = 1.0
    eye = np.eye(dim, dtype=complex)
    return InterpolatedHamiltonian(
        HermitianOperator(eye - np.outer(plus, plus.conj())),
        HermitianOperator(eye - np.outer(mark, mark.conj())),
        label=f"grover-full n={n_qubits} marked={marked}",
    )


def landau_zener(delta: float) -> InterpolatedHamiltonian:
    """Avoided crossing H(s) = (2s - 1) Z + delta X with minimum gap 2 delta at s = 1/2."""
    if not 0.0 < delta <= 1.0:
        raise ValidationError(f"delta={delta!r} must lie in (0, 1]")
    return InterpolatedHamiltonian(
        HermitianOperator(-PAULI_Z + delta * PAULI_X),
        HermitianOperator(PAULI_Z + delta * PAULI_X),
        label=f"landau-zener delta={delta:g}",
    )


def landau_zener_gap(delta: float, s):
    return 2.0 * np.sqrt((2.0 * np.asarray(s) - 1.0) ** 2 + delta**2)


# -- file format -------------------------------------------------------------


def _format_matrix(m: np.ndarray) -> list[str]:
    return [" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) for row in m]


def save(h: InterpolatedHamiltonian, path) -> None:
    lines = [FILE_HEADER, f"dim {h.dim}", "h_i", *_format_matrix(h.h_i.matrix), "h_f", *_format_matrix(h.h_f.matrix)]
    Path(path).write_text("\n".join(lines) + "\n")


def _content_lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def _read_matrix(lines, name: str, dim: int, last_line: int) -> np.ndarray:
    rows = []
    for _ in range(dim):
        try:
            no, line = next(lines)
        except StopIteration:
            raise ParseError(f"{name}: expected {dim} rows, got {len(rows)}", last_line) from None
        tokens = line.split()
        if not tokens[0][0].isdigit() and tokens[0][0] not in "+-.":
            raise ParseError(f"{name}: expected {dim} rows, got {len(rows)} before {tokens[0]!r}", no)
        if len(tokens) != 2 * dim:
            raise ParseError(f"{name}: row has {len(tokens)} numbers, expected {2 * dim} (re im pairs)", no)
        try:
            vals = [float(t) for t in tokens]
        except ValueError as exc:
            raise ParseError(f"{name}: {exc}", no) from None
        rows.append([complex(re, im) for re, im in zip(vals[0::2], vals[1::2])])
        last_line = no
    return np.array(rows, dtype=complex)


def loads(text: str) -> InterpolatedHamiltonian:
    lines = _content_lines(text)
    try:
        no, line = next(lines)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    if line != FILE_HEADER:
        raise ParseError(f"bad header {line!r}, expected {FILE_HEADER!r}", no)
    no, line = next(lines, (no, ""))
    parts = line.split()
    if len(parts) != 2 or parts[0] != "dim":
        raise ParseError(f"expected 'dim <integer>', got {line!r}", no)
    try:
        dim = int(parts[1])
    except ValueError:
        raise ParseError(f"dim is not an integer: {parts[1]!r}", no) from None
    if dim < 2:
        raise ParseError(f"dim must be >= 2, got {dim}", no)
    mats = {}
    for name in ("h_i", "h_f"):
        no, line = next(lines, (no, ""))
        if line != name:
            raise ParseError(f"expected section {name!r}, got {line!r}", no)
        mats[name] = _read_matrix(lines, name, dim, no)
    extra = next(lines, None)
    if extra is not None:
        raise ParseError(f"unexpected trailing content {extra[1]!r}", extra[0])
    return InterpolatedHamiltonian(HermitianOperator(mats["h_i"]), HermitianOperator(mats["h_f"]))


def load(path) -> InterpolatedHamiltonian:
    return loads(Path(path).read_text())
