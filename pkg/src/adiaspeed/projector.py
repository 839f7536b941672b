"""Projector backends for eigenstate-overlap estimation and their error bounds.

Three backends are available: the exact spectral projector (the oracle), the Gaussian filter
exp(-beta^2/2 (H - E)^2) evaluated exactly, and the same filter sampled by Monte Carlo as a
Gaussian-weighted average of time evolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguityError, SearchError, ValidationError
from .operators import HermitianOperator, SpectralDecomposition, eig

C0 = 1.3802
C1 = 0.3749
AMBIGUITY_TOL = 1e-6
# golden-section bracket width in units of 1/beta; coarser widths exceed the
# certified error bound in the well-separated regime
REFINE_TOL = 1e-6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ExactBackend:
    name = "exact"

    def describe(self) -> str:
        return "exact"


@dataclass(frozen=True)
class GaussianBackend:
    beta: float
    name = "gaussian"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta}")

    def describe(self) -> str:
        return f"gaussian beta={self.beta:.17g}"


@dataclass(frozen=True)
class GaussianMCBackend:
    beta: float
    n_samples: int
    seed: int = 0
    name = "gaussian-mc"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta}")
        if self.n_samples < 1:
            raise ValidationError(f"need at least one Monte Carlo sample, got {self.n_samples}")

    def describe(self) -> str:
        return f"gaussian-mc beta={self.beta:.17g} n_samples={self.n_samples} seed={self.seed}"

    def generator(self, key=()) -> np.random.Generator:
        """Counter-based stream for the call identified by key."""
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=tuple(key))
        return np.random.Generator(np.random.Philox(ss))


ProjectorBackend = ExactBackend | GaussianBackend | GaussianMCBackend


@dataclass(frozen=True, eq=False)
class ProjectionOutcome:
    projected: np.ndarray
    energy_estimate: float
    weight: float
    certificate: tuple[float, float] | None = None


def _decompose(h) -> SpectralDecomposition:
    if isinstance(h, SpectralDecomposition):
        return h
    return eig(h if isinstance(h, HermitianOperator) else HermitianOperator(h))


class _Filter:
    """g(E) and the filtered state for one (H, chi, backend, call key)."""

    def __init__(self, h, chi, backend, key=()):
        if isinstance(backend, ExactBackend):
            raise ValidationError("g(E) is undefined for the exact projector backend")
        self.dec = _decompose(h)
        self.coef = self.dec.coefficients(np.asarray(chi, dtype=complex))
        self.weights = np.abs(self.coef) ** 2
        self.backend = backend
        self.beta = backend.beta
        if isinstance(backend, GaussianMCBackend):
            rng = backend.generator(key)
            z = rng.standard_normal((2, backend.n_samples))
            # g needs exp(-beta^2 x^2): variance 2 beta^2; the state filter
            # exp(-beta^2 x^2 / 2): variance beta^2
            self.t_g = math.sqrt(2.0) * self.beta * z[0]
            self.t_f = self.beta * z[1]
        self.evaluations = 0

    def g(self, energies):
        e = np.atleast_1d(np.asarray(energies, dtype=float))
        self.evaluations += e.size
        diff = e[:, None] - self.dec.eigenvalues[None, :]
        if isinstance(self.backend, GaussianMCBackend):
            out = np.empty(e.size)
            for i, row in enumerate(diff):
                out[i] = np.mean(np.cos(np.outer(self.t_g, row)) @ self.weights)
        else:
            out = np.exp(-(self.beta * diff) ** 2) @ self.weights
        return out if np.ndim(energies) else float(out[0])

    def filtered_state(self, energy):
        x = self.dec.eigenvalues - energy
        if isinstance(self.backend, GaussianMCBackend):
            amp = np.mean(np.exp(-1j * np.outer(self.t_f, x)), axis=0)
        else:
            amp = np.exp(-0.5 * (self.beta * x) ** 2)
        return self.dec.eigenvectors @ (amp * self.coef)


def g_of_E(h, chi, energy, backend, key=()):
    """Squared norm of the Gaussian-filtered state, ||exp(-beta^2/2 (H-E)^2) chi||^2."""
    return _Filter(h, chi, backend, key).g(energy)


def _golden_max(g, a, b, tol):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _GOLDEN * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def _search(filt: _Filter, e_hint, window, tol):
    beta = filt.beta
    lo_w, hi_w = window
    if not lo_w <= e_hint <= hi_w:
        raise SearchError(f"energy hint {e_hint:.6g} outside window [{lo_w:.6g}, {hi_w:.6g}]")
    step = 0.5 / beta
    below = np.arange(-4, 0) * step + e_hint
    above = np.arange(1, 5) * step + e_hint
    grid = np.concatenate([below[below >= lo_w], [e_hint], above[above <= hi_w]])
    vals = filt.g(grid)
    while True:
        interior = [
            i for i in range(1, grid.size - 1) if vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1]
        ]
        if interior:
            i = min(interior, key=lambda k: abs(grid[k] - e_hint))
            break
        # monotone over the scanned range: extend toward increasing g
        if vals[-1] >= vals[0]:
            ext = grid[-1] + np.arange(1, 5) * step
            ext = ext[ext <= hi_w]
            if ext.size == 0:
                raise SearchError(f"no interior maximum of g(E) in scanned range [{grid[0]:.6g}, {grid[-1]:.6g}]")
            grid = np.concatenate([grid, ext])
            vals = np.concatenate([vals, filt.g(ext)])
        else:
            ext = grid[0] - np.arange(4, 0, -1) * step
            ext = ext[ext >= lo_w]
            if ext.size == 0:
                raise SearchError(f"no interior maximum of g(E) in scanned range [{grid[0]:.6g}, {grid[-1]:.6g}]")
            grid = np.concatenate([ext, grid])
            vals = np.concatenate([filt.g(ext), vals])
    return _golden_max(filt.g, grid[i - 1], grid[i + 1], tol)


def _default_window(dec: SpectralDecomposition, beta: float):
    return float(dec.eigenvalues[0] - 2.0 / beta), float(dec.eigenvalues[-1] + 2.0 / beta)


def estimate_energy(h, chi, backend, window=None, e_hint=None, tol=None, key=()) -> float:
    """Local maximizer of g(E) nearest the hint.

    A coarse scan at spacing 0.5/beta over e_hint +/- 2/beta (extended toward
    increasing g while the scan is monotone) is refined by golden-section search
    to a bracket of width tol (default 1e-6/beta).
    """
    filt = _Filter(h, chi, backend, key)
    if window is None:
        window = _default_window(filt.dec, filt.beta)
    if e_hint is None:
        raise ValidationError("an energy hint is required for the Gaussian backends")
    return _search(filt, float(e_hint), window, tol if tol is not None else REFINE_TOL / filt.beta)


def apply_projector(h, psi, level_hint, backend, key=(), window=None, tol=None, certify=False) -> ProjectionOutcome:
    """Project psi onto the tracked level.

    level_hint is (E_hint, index); either entry may be None. The exact backend
    picks the level of maximal overlap with psi among levels within the hint
    neighbourhood (all levels when no energy hint is given, else levels no
    farther from E_hint than the index level, when given). Gaussian backends
    estimate E* near E_hint and apply exp(-beta^2/2 (H - E*)^2).
    """
    dec = _decompose(h)
    psi = np.asarray(psi, dtype=complex)
    e_hint, index = level_hint if level_hint is not None else (None, None)
    if isinstance(backend, ExactBackend):
        coef = dec.coefficients(psi)
        weights = np.abs(coef) ** 2
        candidates = np.arange(dec.dim)
        if e_hint is not None and index is not None:
            radius = abs(dec.eigenvalues[index] - e_hint) + 1e-12
            candidates = candidates[np.abs(dec.eigenvalues - e_hint) <= radius]
        elif e_hint is None and index is not None:
            candidates = np.array([index])
        order = candidates[np.argsort(weights[candidates])[::-1]]
        k = int(order[0])
        if order.size > 1 and weights[k] - weights[order[1]] < AMBIGUITY_TOL:
            raise AmbiguityError(
                f"levels {k} and {int(order[1])} have near-equal overlaps "
                f"({weights[k]:.8f} vs {weights[order[1]]:.8f})"
            )
        projected = coef[k] * dec.eigenvectors[:, k]
        return ProjectionOutcome(projected, float(dec.eigenvalues[k]), float(weights[k]))

    if e_hint is None:
        if index is None:
            raise ValidationError("Gaussian backends need an energy hint or a level index")
        e_hint = float(dec.eigenvalues[index])
    filt = _Filter(dec, psi, backend, key)
    if window is None:
        window = _default_window(dec, filt.beta)
    e_star = _search(filt, float(e_hint), window, tol if tol is not None else REFINE_TOL / filt.beta)
    projected = filt.filtered_state(e_star)
    if isinstance(backend, GaussianMCBackend):
        weight = float(filt.g(e_star))
    else:
        weight = float(np.vdot(projected, projected).real)
    certificate = None
    if certify:
        certificate = _certificate(dec, filt.weights, e_star, filt.beta)
    return ProjectionOutcome(projected, float(e_star), weight, certificate)


def _certificate(dec, weights, e_star, beta):
    k = int(np.argmin(np.abs(dec.eigenvalues - e_star)))
    gap = float(np.min(np.abs(np.delete(dec.eigenvalues, k) - dec.eigenvalues[k])))
    w0 = float(weights[k] / weights.sum())
    r = w0 / max(1.0 - w0, 1e-300)
    b_min = beta_requirement(gap, r)
    eps = energy_error_bound(beta, gap, r) if beta >= b_min else float("nan")
    return eps, b_min


# -- certification bounds ----------------------------------------------------


def lambert_w_minus1(x: float) -> float:
    """Lower real branch W_{-1}(x) for -1/e <= x < 0, by Halley iteration."""
    x = float(x)
    branch = -math.exp(-1.0)
    if not branch - 1e-15 <= x < 0.0:
        raise ValidationError(f"W_-1 is real only on [-1/e, 0), got {x!r}")
    q = 1.0 + math.e * x
    if q <= 1e-15:
        return -1.0
    if q < 0.05:
        # series about the branch point
        p = -math.sqrt(2.0 * q)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    else:
        lx = math.log(-x)
        w = lx - math.log(-lx)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_next = min(w - step, -1.0)
        if abs(w_next - w) <= 1e-15 * abs(w_next):
            w = w_next
            break
        w = w_next
    return w


def _script_w(x: float) -> float:
    arg = min(0.25 * math.sqrt(math.e) / x, math.exp(-1.0))
    return 0.5 - lambert_w_minus1(-arg)


def beta_requirement(gap: float, r: float) -> float:
    """Smallest beta meeting the sufficient isolation condition for a level with
    gap `gap` and weight ratio r = w0 / (1 - w0)."""
    if not gap > 0 or not r > 0:
        raise ValidationError("gap and r must be positive")
    return max(math.sqrt(2.0), math.sqrt(_script_w(1.0 + C0 + C1 / r))) / gap


def energy_error_bound(beta: float, gap: float, r: float) -> float:
    """Upper bound on |E* - E0| for the g(E) maximizer near E0."""
    bd2 = (beta * gap) ** 2
    damp = math.exp(-bd2)
    a0 = math.sqrt(2.0) * beta * gap * damp
    a1 = r - (2.0 * bd2 - 1.0) * damp
    a2 = C0 * r + C1
    disc = a1 * a1 - 2.0 * a0 * a2
    if disc < 0 or a1 <= 0:
        b_min = beta_requirement(gap, r)
        if beta >= b_min:
            # the printed condition does not imply disc >= 0 when r is small
            raise ValidationError(
                f"bound undefined at beta={beta:.6g}, gap={gap:.6g}, r={r:.6g} (discriminant {disc:.3g}) "
                f"although beta >= beta_requirement={b_min:.6g}: the beta condition is not sufficient at this r"
            )
        raise ValidationError(
            f"beta={beta:.6g} too small for gap={gap:.6g}, r={r:.6g} (discriminant {disc:.3g}); "
            f"need beta >= {b_min:.6g}"
        )
    # a1 - sqrt(a1^2 - 2 a0 a2) rewritten to avoid cancellation
    return (2.0 * a0 / (a1 + math.sqrt(disc))) / (math.sqrt(2.0) * beta)


def bound_defined(beta: float, gap: float, r: float) -> bool:
    """True when the energy bound's discriminant is nonnegative (and a1 > 0)."""
    bd2 = (beta * gap) ** 2
    damp = math.exp(-bd2)
    a1 = r - (2.0 * bd2 - 1.0) * damp
    return a1 > 0 and a1 * a1 >= 2.0 * math.sqrt(2.0) * beta * gap * damp * (C0 * r + C1)


def sufficiency_threshold(margin: float = 1.0, r_lo: float = 1e-4, r_hi: float = 1e2) -> float:
    """Smallest r above which beta = margin * beta_requirement keeps the energy bound defined.

    Found by bisection in log r; assumes a single crossover in [r_lo, r_hi].
    """
    if bound_defined(margin * beta_requirement(1.0, r_lo), 1.0, r_lo):
        return r_lo
    for _ in range(200):
        mid = math.sqrt(r_lo * r_hi)
        if bound_defined(margin * beta_requirement(1.0, mid), 1.0, mid):
            r_hi = mid
        else:
            r_lo = mid
        if r_hi / r_lo < 1 + 1e-12:
            break
    return r_hi


def norm_upper_bound(w0: float, beta: float, gap: float, eps_u: float) -> float:
    return w0 * gap / (gap - eps_u) * math.exp(-(beta * eps_u) ** 2)


def leading_order_error(beta: float, gap: float, r: float) -> float:
    return gap * math.exp(-(beta * gap) ** 2) / r


def sample_count(epsilon: float, eta: float) -> int:
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    if not 0.0 <= eta < 1.0:
        raise ValidationError("eta must lie in [0, 1)")
    # tiny relative slack so exact bounds (e.g. epsilon = sqrt 2) do not round up
    return max(1, math.ceil(2.0 / (epsilon**2 * (1.0 - eta) ** 2) * (1 - 1e-12)))


def mc_variance_bound(eta: float, n_samples: int) -> float:
    """Delta-method bound on the standard deviation of the MC overlap ratio p/f."""
    if not 0.0 <= eta < 1.0 or n_samples < 1:
        raise ValidationError("need eta in [0, 1) and n_samples >= 1")
    return math.sqrt(2.0) / ((1.0 - eta) * math.sqrt(n_samples))
