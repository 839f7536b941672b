"""Time-dependent Schroedinger propagation under a schedule, fidelities, and
minimum-time searches.

Stepping is the exponential midpoint rule
    psi_{k+1} = exp(-i H(s(tau_k + dtau/2)) T dtau) psi_k,
with every exponential formed exactly from an eigendecomposition. It is exactly
unitary and second order in dtau.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, SearchError, ValidationError
from .hamiltonians import InterpolatedHamiltonian
from .operators import eig
from .schedules import Schedule

ACCURACY_GUARD = 0.1
NORM_TOL = 1e-9
_CHUNK = 1 << 14
_TREE_MAX_DIM = 8


@dataclass(frozen=True)
class EvolutionConfig:
    total_time: float
    steps_per_unit_time: float | None = None
    tracked_level: int = 0

    def __post_init__(self):
        if not self.total_time > 0:
            raise ConfigurationError(f"total_time must be positive, got {self.total_time}")
        if self.steps_per_unit_time is not None and not self.steps_per_unit_time > 0:
            raise ConfigurationError("steps_per_unit_time must be positive")

    def n_steps(self, max_norm: float) -> int:
        spt = self.steps_per_unit_time
        if spt is None:
            spt = default_steps_per_unit_time(max_norm)
        dt = 1.0 / spt
        if dt * max_norm > ACCURACY_GUARD * (1 + 1e-12):
            need = math.ceil(max_norm / ACCURACY_GUARD)
            raise ConfigurationError(
                f"step dt={dt:.3g} violates dt*max||H||={dt * max_norm:.3g} <= {ACCURACY_GUARD}; "
                f"use steps_per_unit_time >= {need} ({math.ceil(self.total_time * need)} steps)"
            )
        return max(1, math.ceil(self.total_time * spt))


def default_steps_per_unit_time(max_norm: float) -> float:
    return max(max_norm, 1e-3) / ACCURACY_GUARD


def _step_unitaries(h: InterpolatedHamiltonian, s_mid: np.ndarray, dt: float) -> np.ndarray:
    w, v = np.linalg.eigh(h.matrix_at(s_mid))
    phases = np.exp(-1j * dt * w)
    return (v * phases[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _ordered_product(u: np.ndarray) -> np.ndarray:
    """U_{n-1} ... U_1 U_0 by pairwise reduction."""
    while u.shape[0] > 1:
        if u.shape[0] % 2:
            u = np.concatenate([u, np.eye(u.shape[-1], dtype=complex)[None]], axis=0)
        u = u[1::2] @ u[0::2]
    return u[0]


def propagate(
    h: InterpolatedHamiltonian,
    s_of_tau: Callable[[np.ndarray], np.ndarray],
    total_time: float,
    n_steps: int,
    psi0: np.ndarray,
) -> np.ndarray:
    """Evolve psi0 for physical time total_time along s_of_tau, tau = t/total_time.

    s_of_tau may end below s = 1; it only has to be defined on [0, 1].
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    if psi.shape != (h.dim,):
        raise ValidationError(f"state has shape {psi.shape}, Hamiltonian has dim {h.dim}")
    dtau = 1.0 / n_steps
    dt = total_time * dtau
    for start in range(0, n_steps, _CHUNK):
        k = np.arange(start, min(start + _CHUNK, n_steps))
        s_mid = np.clip(np.asarray(s_of_tau((k + 0.5) * dtau), dtype=float), 0.0, 1.0)
        if h.dim <= _TREE_MAX_DIM:
            psi = _ordered_product(_step_unitaries(h, s_mid, dt)) @ psi
        else:
            for s in s_mid:
                w, v = np.linalg.eigh(h.matrix_at(s))
                psi = v @ (np.exp(-1j * dt * w) * (v.conj().T @ psi))
    return psi


def evolve(
    h: InterpolatedHamiltonian,
    sched: Schedule,
    cfg: EvolutionConfig,
    psi0: np.ndarray | None = None,
) -> np.ndarray:
    if psi0 is None:
        psi0 = eig(h.h_i).vector(cfg.tracked_level)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValidationError("initial state must be normalized")
    if abs(float(sched(0.0))) > 1e-12 or abs(float(sched(1.0)) - 1.0) > 1e-12:
        raise ValidationError("schedule must satisfy s(0)=0 and s(1)=1")
    n = cfg.n_steps(h.max_norm())
    psi = propagate(h, sched, cfg.total_time, n, psi0)
    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > NORM_TOL:
        raise RuntimeError(f"norm drifted by {drift:.2e} during propagation")
    return psi


def fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    return float(min(1.0, abs(np.vdot(psi, phi)) ** 2))


def endpoint_states(h: InterpolatedHamiltonian, level: int = 0):
    return eig(h.h_i).vector(level), eig(h.h_f).vector(level)


def final_fidelity(
    h: InterpolatedHamiltonian,
    sched: Schedule,
    total_time: float,
    level: int = 0,
    steps_per_unit_time: float | None = None,
) -> float:
    psi0, target = endpoint_states(h, level)
    cfg = EvolutionConfig(total_time, steps_per_unit_time, level)
    return fidelity(evolve(h, sched, cfg, psi0), target)


@dataclass(frozen=True)
class MinTimeResult:
    time: float
    fidelity: float
    lower: float
    lower_fidelity: float
    evaluations: int


def min_time_for_fidelity(
    h: InterpolatedHamiltonian,
    sched: Schedule,
    target_f: float,
    t_bracket: tuple[float, float] = (1.0, 2.0),
    level: int = 0,
    rel_tol: float = 1e-2,
    steps_per_unit_time: float | None = None,
    max_doublings: int = 20,
) -> MinTimeResult:
    """Bisection (in log T) for the first bracketed T with F(T) >= target_f.

    F(T) oscillates, so the contract is two-sided: the returned time meets the
    target and the lower end of the final bracket, within rel_tol below it,
    does not.
    """
    if not 0.0 < target_f < 1.0:
        raise ValidationError(f"target fidelity must lie in (0, 1), got {target_f}")
    lo, hi = map(float, t_bracket)
    if not 0 < lo < hi:
        raise ValidationError(f"bad bracket {t_bracket}")
    count = 0

    def f_at(t):
        nonlocal count
        count += 1
        return final_fidelity(h, sched, t, level, steps_per_unit_time)

    f_lo = f_at(lo)
    if f_lo >= target_f:
        return MinTimeResult(lo, f_lo, lo, f_lo, count)
    f_hi = f_at(hi)
    doublings = 0
    while f_hi < target_f:
        if doublings == max_doublings:
            raise SearchError(f"fidelity {target_f} not reached by T={hi:.4g} after {max_doublings} doublings")
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = f_at(hi)
        doublings += 1
    while (hi - lo) > rel_tol * hi:
        mid = math.sqrt(lo * hi)
        f_mid = f_at(mid)
        if f_mid >= target_f:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return MinTimeResult(hi, f_hi, lo, f_lo, count)
