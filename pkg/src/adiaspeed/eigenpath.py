"""Gauge-fixed eigenstate paths and their geometry.

Derivatives with respect to s, tau and arc length l are taken with three-point
finite-difference stencils on the (generally non-uniform) sample grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegeneracyError, RefineGridError, ValidationError
from .hamiltonians import InterpolatedHamiltonian
from .operators import DEGENERACY_TOL, canonicalize_phases
from .schedules import Schedule, TabulatedSchedule

CONTINUITY_MIN_OVERLAP = 0.5
MAX_STENCIL_SEGMENT = 0.1
MIN_GRID_SPACING = 1e-12


@dataclass(frozen=True, eq=False)
class PathSample:
    s: float
    energy: float
    state: np.ndarray
    gap: float
    excited_energy: float | None = None
    excited_state: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class PathTable:
    """Samples of one tracked eigenlevel along s in [0, 1], stored column-wise."""

    s: np.ndarray
    energy: np.ndarray
    states: np.ndarray
    gap: np.ndarray
    excited_energy: np.ndarray | None = None
    excited_states: np.ndarray | None = None
    dh_norm: float = 0.0

    def __len__(self):
        return self.s.size

    @property
    def samples(self) -> list[PathSample]:
        out = []
        for k in range(len(self)):
            exc_e = None if self.excited_energy is None else float(self.excited_energy[k])
            exc_v = None if self.excited_states is None else self.excited_states[k]
            out.append(PathSample(float(self.s[k]), float(self.energy[k]), self.states[k], float(self.gap[k]), exc_e, exc_v))
        return out

    def overlaps(self) -> np.ndarray:
        """|<Phi_k|Phi_{k+1}>| for adjacent samples."""
        return np.abs(np.einsum("ij,ij->i", self.states[:-1].conj(), self.states[1:]))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "energy", "gap", "excited_energy"])
            exc = self.excited_energy if self.excited_energy is not None else np.full(len(self), np.nan)
            for row in zip(self.s, self.energy, self.gap, exc):
                w.writerow([f"{v:.17g}" for v in row])


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise ValidationError("grid needs at least two points")
    if np.any(np.diff(g) <= 0):
        raise ValidationError("grid must be strictly increasing")
    if g[0] != 0.0 or g[-1] != 1.0:
        raise ValidationError("grid must start at s=0 and end at s=1")
    return g


def track_eigenstate(h: InterpolatedHamiltonian, grid, level: int = 0, excited: bool = True) -> PathTable:
    """Follow one eigenlevel along the grid by maximal overlap with the previous sample.

    Each state is phased so that its overlap with the previous sample is real and
    non-negative (a discrete parallel transport).
    """
    g = _check_grid(grid)
    n, d = g.size, h.dim
    if not 0 <= level < d:
        raise ValidationError(f"level {level} out of range for dim {d}")
    energy = np.empty(n)
    gap = np.empty(n)
    states = np.empty((n, d), dtype=complex)
    exc_e = np.empty(n) if excited else None
    exc_v = np.empty((n, d), dtype=complex) if excited else None
    prev = None
    idx = level
    chunk = max(1, 4096 // (d * d))
    for start in range(0, n, chunk):
        w_all, v_all = np.linalg.eigh(h.matrix_at(g[start : start + chunk]))
        for off, (w, v) in enumerate(zip(w_all, v_all)):
            k = start + off
            if prev is None:
                phi = canonicalize_phases(v[:, idx : idx + 1])[:, 0]
            else:
                amps = v.conj().T @ prev
                j = int(np.argmax(np.abs(amps)))
                best = abs(amps[j]) ** 2
                if best <= CONTINUITY_MIN_OVERLAP:
                    raise RefineGridError(
                        f"eigenstate jumped between s={g[k - 1]:.6g} and s={g[k]:.6g} "
                        f"(overlap^2 {best:.3f}); refine the grid near s={g[k]:.6g}",
                        s=float(g[k]),
                    )
                if j != idx:
                    # the tracked level is gapped, so its energy rank cannot change;
                    # a rank change means the step skipped an avoided crossing
                    raise RefineGridError(
                        f"tracked level changed rank {idx} -> {j} between s={g[k - 1]:.6g} and "
                        f"s={g[k]:.6g}; refine the grid near s={g[k]:.6g}",
                        s=float(g[k]),
                    )
                # <prev|phi> = conj(amps[j]) * phase must be real and positive
                phi = v[:, j] * (amps[j] / abs(amps[j]))
            others = np.delete(w, idx)
            gk = float(np.min(np.abs(others - w[idx])))
            if gk < DEGENERACY_TOL:
                raise DegeneracyError(f"tracked level degenerate at s={g[k]:.6g} (gap {gk:.2e})")
            energy[k], gap[k], states[k] = w[idx], gk, phi
            if excited:
                above = np.nonzero(w > w[idx])[0]
                j = int(above[0]) if above.size else int(np.argmax(np.where(np.arange(d) == idx, -np.inf, w)))
                exc_e[k] = w[j]
                exc_v[k] = v[:, j]
            prev = phi
    return PathTable(g, energy, states, gap, exc_e, exc_v, h.derivative_norm())


def refine_grid(
    h: InterpolatedHamiltonian,
    level: int = 0,
    max_segment: float = 0.01,
    n_initial: int = 65,
    max_points: int = 1_000_000,
) -> np.ndarray:
    """Grid on [0, 1] whose adjacent segment lengths are all at most max_segment."""
    grid = np.linspace(0.0, 1.0, n_initial)
    while True:
        try:
            table = track_eigenstate(h, grid, level, excited=False)
        except RefineGridError as err:
            k = int(np.searchsorted(grid, err.s))
            if grid[k] - grid[k - 1] < MIN_GRID_SPACING:
                raise DegeneracyError(f"tracked level {level} meets another level near s={err.s:.12g}") from None
            grid = np.sort(np.concatenate([grid, [0.5 * (grid[k - 1] + grid[k])]]))
            continue
        dl = np.sqrt(np.clip(1.0 - table.overlaps() ** 2, 0.0, None))
        bad = np.nonzero(dl > max_segment)[0]
        if bad.size == 0:
            return grid
        if grid.size + bad.size > max_points:
            raise RefineGridError(f"grid refinement exceeded {max_points} points")
        grid = np.sort(np.concatenate([grid, 0.5 * (grid[bad] + grid[bad + 1])]))


def _orthogonal_norms(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """||b - <a|b> a|| row-wise, equal to sqrt(1 - |<a|b>|^2) without the cancellation."""
    coef = np.einsum("...i,...i->...", a.conj(), b)
    return np.linalg.norm(b - coef[..., None] * a, axis=-1)


def segment_length(a: np.ndarray, b: np.ndarray) -> float:
    """sqrt(1 - |<a|b>|^2) for normalized states."""
    return float(_orthogonal_norms(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)))


def path_length(table: PathTable) -> float:
    ov = table.overlaps()
    if np.any(ov**2 <= CONTINUITY_MIN_OVERLAP):
        raise RefineGridError("table fails the continuity guard")
    return float(np.sum(_orthogonal_norms(table.states[:-1], table.states[1:])))


def fs_distances(table: PathTable) -> np.ndarray:
    """Fubini-Study distances arccos|<Phi_k|Phi_{k+1}>| between neighbours.

    Evaluated as arcsin of the orthogonal component, which keeps full precision
    for nearby states (the continuity guard keeps every distance below pi/4).
    """
    return np.arcsin(np.clip(_orthogonal_norms(table.states[:-1], table.states[1:]), 0.0, 1.0))


def arc_length(table: PathTable) -> np.ndarray:
    """Cumulative arc length l(s_k), l(0) = 0."""
    return np.concatenate([[0.0], np.cumsum(fs_distances(table))])


# -- finite differences --------------------------------------------------------


def _stencil(x0, x1, x2, at):
    """Weights (first, second derivative) at x[at] from the quadratic through three nodes."""
    xs = (x0, x1, x2)
    xa = xs[at]
    first = []
    second = []
    for i in range(3):
        a, b = [xs[j] for j in range(3) if j != i]
        denom = (xs[i] - a) * (xs[i] - b)
        first.append((2 * xa - a - b) / denom)
        second.append(2.0 / denom)
    return np.array(first), np.array(second)


def derivatives(x: np.ndarray, y: np.ndarray):
    """First and second derivatives of samples y(x) along axis 0 at every node."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 3:
        raise ValidationError("need at least three samples for second differences")
    d1 = np.empty_like(y)
    d2 = np.empty_like(y)
    for k in range(n):
        lo = min(max(k - 1, 0), n - 3)
        w1, w2 = _stencil(x[lo], x[lo + 1], x[lo + 2], k - lo)
        block = y[lo : lo + 3]
        d1[k] = np.tensordot(w1, block, axes=(0, 0))
        d2[k] = np.tensordot(w2, block, axes=(0, 0))
    return d1, d2


def _reject_component(states, vecs):
    """Q vecs: remove the component along each state."""
    coef = np.einsum("ij,ij->i", states.conj(), vecs)
    return vecs - coef[:, None] * states


def metric_speed(table: PathTable) -> np.ndarray:
    """||d Phi/ds|| at every sample."""
    d1, _ = derivatives(table.s, table.states)
    return np.linalg.norm(_reject_component(table.states, d1), axis=1)


def speed_profile(sched: Schedule, table: PathTable, tau_grid) -> np.ndarray:
    """v(tau) = ||d Phi/ds|| (s(tau)) * ds/dtau."""
    tau = np.asarray(tau_grid, dtype=float)
    return np.interp(sched(tau), table.s, metric_speed(table)) * sched.derivative(tau)


def _tau_nodes(sched: Schedule, table: PathTable) -> np.ndarray:
    tau = np.asarray(sched.inverse(table.s), dtype=float)
    tau[0], tau[-1] = 0.0, 1.0
    if np.any(np.diff(tau) <= 0):
        raise RefineGridError("schedule maps distinct samples to the same tau; refine the table")
    return tau


@dataclass(frozen=True)
class CurvatureReport:
    kappa: float
    qpp_direct: float
    qpp_geometric: float
    speed: float
    acceleration: float


def curvature_and_qpp(table: PathTable, k: int, sched: Schedule) -> CurvatureReport:
    """Curvature and ||Q Phi''|| at interior sample k, computed two ways.

    The direct value differentiates the states twice in tau. The geometric value
    assembles sqrt(vdot^2 + kappa^2 v^4) from the arc length l(tau) and the
    second derivative of the states in l.
    """
    if not 0 < k < len(table) - 1:
        raise ValidationError(f"sample {k} is not interior")
    sl = slice(k - 1, k + 2)
    phi = table.states[sl]
    dist = fs_distances(table)[k - 1 : k + 1]
    if np.max(dist) > MAX_STENCIL_SEGMENT:
        raise RefineGridError(
            f"neighbours of s={table.s[k]:.6g} are {np.max(dist):.3g} apart in arc length; "
            f"refine the grid below {MAX_STENCIL_SEGMENT}",
            s=float(table.s[k]),
        )
    tau = np.asarray(sched.inverse(table.s[sl]), dtype=float)
    w1, w2 = _stencil(*tau, at=1)
    qpp_direct = float(np.linalg.norm(_reject_component(phi[1:2], (w2 @ phi)[None])[0]))
    l = np.array([-dist[0], 0.0, dist[1]])
    v = float(w1 @ l)
    vdot = float(w2 @ l)
    if dist[0] == 0.0 or dist[1] == 0.0:
        kappa = 0.0
    else:
        _, u2 = _stencil(*l, at=1)
        kappa = float(np.linalg.norm(_reject_component(phi[1:2], (u2 @ phi)[None])[0]))
    qpp_geometric = float(np.sqrt(vdot**2 + kappa**2 * v**4))
    return CurvatureReport(kappa, qpp_direct, qpp_geometric, v, vdot)


@dataclass(frozen=True)
class CFunctional:
    total: float
    boundary: float
    acceleration: float
    speed_squared: float
    hamiltonian: float
    total_projector: float
    projector_terms: tuple[float, float, float, float]

    @property
    def terms(self) -> tuple[float, float, float, float]:
        return (self.boundary, self.acceleration, self.speed_squared, self.hamiltonian)


def _trapezoid(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def c_functional(sched: Schedule, table: PathTable) -> CFunctional:
    """Adiabatic error functional C[s], in geometric and projector form.

    Integrals use the composite trapezoid rule on the tau images of the table's
    samples; ||H_dot|| is the spectral norm of (H_f - H_i) ds/dtau.
    """
    tau = _tau_nodes(sched, table)
    phi = table.states
    l = arc_length(table)
    v, vdot = derivatives(tau, l)
    if l[-1] == 0.0:
        kappa = np.zeros_like(l)
    else:
        if np.any(np.diff(l) <= 0):
            raise RefineGridError("arc length is not strictly increasing along the table")
        _, phi_ll = derivatives(l, phi)
        kappa = np.linalg.norm(_reject_component(phi, phi_ll), axis=1)
    gap = table.gap
    hdot = table.dh_norm * np.abs(sched.derivative(tau))
    boundary = v[0] / gap[0] + v[-1] / gap[-1]
    acc = _trapezoid(np.sqrt(vdot**2 + kappa**2 * v**4) / gap, tau)
    sq = _trapezoid(v**2 / gap, tau)
    ham = _trapezoid(2 * hdot * v / gap**2, tau)

    proj = np.einsum("ki,kj->kij", phi, phi.conj())
    p1, p2 = derivatives(tau, proj)
    eye = np.eye(table.states.shape[1])
    pdot = np.linalg.norm(p1, ord=2, axis=(1, 2))
    qpp = np.linalg.norm((eye - proj) @ p2 @ proj, ord=2, axis=(1, 2))
    pb = pdot[0] / gap[0] + pdot[-1] / gap[-1]
    pa = _trapezoid(qpp / gap, tau)
    ps = _trapezoid(pdot**2 / gap, tau)
    ph = _trapezoid(2 * hdot * pdot / gap**2, tau)
    return CFunctional(
        boundary + acc + sq + ham, boundary, acc, sq, ham, pb + pa + ps + ph, (pb, pa, ps, ph)
    )


def projector_speed(table: PathTable, sched: Schedule) -> np.ndarray:
    """||dP/dtau|| (spectral norm) at every sample, by finite differences."""
    tau = _tau_nodes(sched, table)
    proj = np.einsum("ki,kj->kij", table.states, table.states.conj())
    p1, _ = derivatives(tau, proj)
    return np.linalg.norm(p1, ord=2, axis=(1, 2))


def asp_time_estimate(table: PathTable, h: InterpolatedHamiltonian, sched: Schedule) -> float:
    """max over samples of |<Phi|H_dot|E_1>| / gap^2 with H_dot = (H_f - H_i) ds/dtau."""
    if table.excited_states is None:
        raise ValidationError("table has no excited-state data; track with excited=True")
    tau = _tau_nodes(sched, table)
    dh = h.s_derivative().matrix
    elem = np.abs(np.einsum("ki,ij,kj->k", table.states.conj(), dh, table.excited_states))
    return float(np.max(elem * np.abs(sched.derivative(tau)) / table.gap**2))


def constant_speed_schedule(table: PathTable) -> TabulatedSchedule:
    """Arc-length parametrization tau = l(s)/L of the tabulated path."""
    l = arc_length(table)
    if l[-1] <= 0.0:
        raise ValidationError("zero-length path has no constant-speed parametrization")
    keep = np.concatenate([[True], np.diff(l) > 0])
    tau = l[keep] / l[-1]
    tau[-1] = 1.0
    s = table.s[keep]
    s[-1] = 1.0
    return TabulatedSchedule(tau, s)
