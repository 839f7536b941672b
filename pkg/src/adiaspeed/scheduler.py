"""Segmented constant-speed schedule construction from measured eigenstate overlaps.

Each step projects the evolved state onto the tracked level at s_j, then searches
for the s' at which the overlap ratio p_j(s')/f_j drops to 1 - dl_t^2. The new
point's time is advanced in proportion to the segment length actually achieved,
so every segment is traversed at the same average speed.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AmbiguityError, BuildAborted, ConfigurationError, SearchError, ValidationError
from .evolution import EvolutionConfig, default_steps_per_unit_time, propagate
from .hamiltonians import InterpolatedHamiltonian
from .operators import eig
from .projector import (
    ExactBackend,
    GaussianBackend,
    GaussianMCBackend,
    ProjectorBackend,
    REFINE_TOL,
    _Filter,
    _search,
    apply_projector,
)
from .schedules import (  # noqa: F401  (re-exported schedule constructors)
    GroverOptimalSchedule,
    LinearSchedule,
    MonotoneCubic,
    Schedule,
    TabulatedSchedule,
    grover_optimal,
    interpolate_monotone,
    linear,
)

AUTO_T1_FIDELITY = 0.9
AUTO_T1_MAX_DOUBLINGS = 20
AUTO_T1_START = 1.0


@dataclass(frozen=True)
class BuilderConfig:
    target_segment_length: float = 0.2
    first_step_time: float | None = None
    backend: ProjectorBackend = field(default_factory=ExactBackend)
    root_tolerance: float | None = None
    fidelity_floor: float = 0.5
    tracked_level: int = 0
    max_segments: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.target_segment_length < 1.0:
            raise ConfigurationError(f"target segment length must lie in (0, 1), got {self.target_segment_length}")
        if self.first_step_time is not None and not self.first_step_time > 0:
            raise ConfigurationError(f"first step time must be positive, got {self.first_step_time}")
        if self.root_tolerance is not None and not self.root_tolerance > 0:
            raise ConfigurationError("root tolerance must be positive")
        if not 0.0 <= self.fidelity_floor < 1.0:
            raise ConfigurationError(f"fidelity floor must lie in [0, 1), got {self.fidelity_floor}")

    @property
    def tolerance(self) -> float:
        if self.root_tolerance is not None:
            return self.root_tolerance
        return 0.05 * self.target_segment_length**2


@dataclass(frozen=True, eq=False)
class SchedulePoints:
    t: np.ndarray
    s: np.ndarray
    dl: np.ndarray
    f: np.ndarray
    root_evaluations: tuple[int, ...]
    first_step_time: float
    target_segment_length: float
    backend: str = "exact"

    @property
    def reference_length(self) -> float:
        return float(self.dl[1])

    @property
    def total_time(self) -> float:
        return float(self.t[-1])

    @property
    def segments(self) -> int:
        return self.s.size - 1

    @property
    def tau(self) -> np.ndarray:
        tau = self.t / self.t[-1]
        tau[-1] = 1.0
        return tau

    def schedule(self) -> TabulatedSchedule:
        """Normalized schedule s_c(tau) = s(T tau)."""
        return TabulatedSchedule(self.tau, self.s)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(
            f"# T={self.total_time:.17g} dl_target={self.target_segment_length:.17g} "
            f"t1={self.first_step_time:.17g} backend={self.backend}\n"
        )
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "t_j", "s_j", "dl_j", "f_j"])
        for j in range(self.s.size):
            w.writerow([j, f"{self.t[j]:.17g}", f"{self.s[j]:.17g}", f"{self.dl[j]:.17g}", f"{self.f[j]:.17g}"])
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()


def load_points(path) -> SchedulePoints:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValidationError("points file must start with a header comment")
    meta = dict(kv.split("=", 1) for kv in lines[0][1:].split() if "=" in kv)
    rows = list(csv.DictReader(lines[1:]))
    if len(rows) < 2:
        raise ValidationError("points file needs at least two rows")
    col = {k: np.array([float(r[k]) for r in rows]) for k in ("t_j", "s_j", "dl_j", "f_j")}
    backend = lines[0].split("backend=", 1)[1] if "backend=" in lines[0] else "unknown"
    return SchedulePoints(
        col["t_j"], col["s_j"], col["dl_j"], col["f_j"], (),
        float(meta.get("t1", "nan")), float(meta.get("dl_target", "nan")), backend,
    )


class _Step:
    """Projection at s_j and the overlap ratio p_j(s')/f_j against trial points."""

    def __init__(self, h, s_j, psi, backend, level_hint, key):
        self.h = h
        self.s = s_j
        self.backend = backend
        self.key = key
        self.window = None
        if not isinstance(backend, ExactBackend):
            # every spectrum on the path lies in [-M, M], M = max ||H||
            reach = h.max_norm() + 2.0 / backend.beta
            self.window = (-reach, reach)
        out = apply_projector(_operator_at(h, s_j), psi, level_hint, backend, key=(*key, 0), window=self.window)
        self.xi = out.projected
        self.f = out.weight
        self.energy = out.energy_estimate
        # the oracle projects onto the level of the same energy rank at s'
        self.index = _level_index(h, s_j, self.energy) if isinstance(backend, ExactBackend) else None

    def slope(self, eta) -> float:
        """Hellmann-Feynman dE/ds for the (unnormalized) projected state eta."""
        return float(np.vdot(eta, self.h.s_derivative().matrix @ eta).real / np.vdot(eta, eta).real)

    def max_step(self, eta) -> float:
        """Largest step in s whose predicted energy change stays within 1.5/beta."""
        if isinstance(self.backend, ExactBackend):
            return math.inf
        slope = abs(self.slope(eta))
        return math.inf if slope == 0.0 else 1.5 / (self.backend.beta * slope)

    def ratio(self, s_prime):
        """p_j(s')/f_j, continuing the tracked energy from s_j."""
        return self.probe(s_prime, self.s, self.energy, self.xi).ratio

    def probe(self, s_prime, s_lo, e_lo, eta_lo) -> "_Probe":
        """Overlap ratio at s' for a search that last accepted the point s_lo.

        Filter backends locate E*(s') twice, from the energy e_lo at s_lo and from
        its first-order extrapolation e_lo + (s' - s_lo) <eta|dH/ds|eta>. The probe
        is trusted only when both searches find the same peak; otherwise s' is
        too far from s_lo for the tracked level to be followed.
        """
        hs = _operator_at(self.h, s_prime)
        if isinstance(self.backend, ExactBackend):
            try:
                out = apply_projector(hs, self.xi, (None, self.index), self.backend)
            except AmbiguityError:
                return _Probe(0.5, float("nan"), None, True)
            return _Probe(out.weight / self.f, out.energy_estimate, out.projected, True)
        filt = _Filter(hs, self.xi, self.backend, key=(*self.key, 1))
        tol = REFINE_TOL / filt.beta
        lo_w, hi_w = self.window
        slope = self.slope(eta_lo)
        hint_a = min(max(e_lo + (s_prime - s_lo) * slope, lo_w), hi_w)
        try:
            e_b = _search(filt, e_lo, self.window, tol)
            e_a = e_b if abs(hint_a - e_lo) * filt.beta < 1e-9 else _search(filt, hint_a, self.window, tol)
        except SearchError:
            return _Probe(float("nan"), float("nan"), None, False)
        if abs(e_a - e_b) * filt.beta > 0.5:
            return _Probe(float("nan"), float("nan"), None, False)
        projected = filt.filtered_state(e_b)
        if isinstance(self.backend, GaussianMCBackend):
            weight = float(filt.g(e_b))
        else:
            weight = float(np.vdot(projected, projected).real)
        return _Probe(weight / self.f, float(e_b), projected, True)


@dataclass(frozen=True, eq=False)
class _Probe:
    ratio: float
    energy: float
    projected: np.ndarray | None
    trusted: bool


def _operator_at(h: InterpolatedHamiltonian, s: float):
    return h.at(float(min(max(s, 0.0), 1.0)))


def overlap_ratio(h, s_j, s_prime, psi, backend, level_hint=(None, None), key=()) -> float:
    """Estimate of |<Phi(s')|Phi(s_j)>|^2 as p_j(s')/f_j for the state psi."""
    return _Step(h, s_j, psi, backend, level_hint, tuple(key)).ratio(s_prime)


def _level_index(h, s, energy) -> int:
    w = np.linalg.eigvalsh(_operator_at(h, s).matrix)
    return int(np.argmin(np.abs(w - energy)))


def _find_root(step: _Step, s_j, target, tol, first_probe):
    """Expanding bracket then bisection on g(s') = p/f - target.

    Returns (s_next, ratio, energy, evaluations). g(s_j) is positive by
    construction. Untrusted probes are pulled halfway back toward the last
    accepted point.
    """
    evals = 0
    lo, e_lo, eta_lo = s_j, step.energy, step.xi
    hi = None
    width = first_probe
    while True:
        if hi is None:
            p = min(s_j + width, lo + step.max_step(eta_lo), 1.0)
        else:
            p = 0.5 * (lo + hi)
        while True:
            evals += 1
            pr = step.probe(p, lo, e_lo, eta_lo)
            if pr.trusted:
                break
            p = 0.5 * (lo + p)
            if p - lo <= 1e-12 * max(1.0, abs(lo)):
                raise SearchError(f"tracked level lost right after s={lo:.12g}; increase beta or the sample count")
            if hi is None:
                width = p - s_j
        g = pr.ratio - target
        if abs(g) <= tol:
            return p, pr.ratio, pr.energy, evals
        if g > 0.0:
            if p >= 1.0:
                return 1.0, pr.ratio, pr.energy, evals
            lo, e_lo, eta_lo = p, pr.energy, pr.projected
            if hi is None:
                width *= 2.0
        else:
            hi = p
        if hi is not None and hi - lo <= 1e-14:
            raise SearchError(
                f"root bracket [{lo:.12g}, {hi:.12g}] collapsed without |g| <= {tol:.3g}; "
                "the overlap ratio is discontinuous here (try a larger sample count or root tolerance)"
            )


def _evolve_to(h, t_pts, s_pts, psi0, spt):
    """State after evolving from t=0 to t_pts[-1] under the interpolant of the points so far."""
    t_end = t_pts[-1]
    if t_end == 0.0:
        return psi0.copy()
    interp = MonotoneCubic(t_pts, s_pts)
    n = max(1, math.ceil(t_end * spt))
    return propagate(h, lambda tau: interp(tau * t_end), t_end, n, psi0)


def _initial(h, level):
    dec = eig(h.h_i)
    return dec.vector(level), float(dec.eigenvalues[level])


class _FloorHit(Exception):
    def __init__(self, j, f, t1):
        super().__init__(j, f, t1)
        self.j = j
        self.f = f
        self.t1 = t1


def _next_hint(h, backend, s, energy):
    if isinstance(backend, ExactBackend):
        return (None, _level_index(h, s, energy))
    return (energy, None)


def _auto_first_step(h, psi0, s1, hint, backend, spt, t1):
    """Smallest t1 * 2^k (k <= 20) whose first segment keeps f_1 >= 0.9."""
    for _ in range(AUTO_T1_MAX_DOUBLINGS + 1):
        psi = _evolve_to(h, np.array([0.0, t1]), np.array([0.0, s1]), psi0, spt)
        f1 = apply_projector(_operator_at(h, s1), psi, hint, backend, key=(0, 2)).weight
        if f1 >= AUTO_T1_FIDELITY:
            return t1
        t1 *= 2.0
    raise BuildAborted(f"first-segment fidelity stayed below {AUTO_T1_FIDELITY} up to t1={t1 / 2:.4g}")


def _run(h, cfg, t1, spt, find_t1):
    backend = cfg.backend
    target = 1.0 - cfg.target_segment_length**2
    tol = cfg.tolerance
    psi0, e0 = _initial(h, cfg.tracked_level)
    t_pts, s_pts, dl_pts, f_pts, roots = [0.0], [0.0], [0.0], [], []
    hint = (e0, cfg.tracked_level)
    speed = None
    j = 0
    while s_pts[-1] < 1.0:
        if j >= cfg.max_segments:
            raise BuildAborted(f"exceeded {cfg.max_segments} segments")
        psi = _evolve_to(h, np.array(t_pts), np.array(s_pts), psi0, spt)
        step = _Step(h, s_pts[-1], psi, backend, hint, (j,))
        if step.f < cfg.fidelity_floor:
            raise _FloorHit(j, step.f, t1)
        f_pts.append(step.f)
        s_j = s_pts[-1]
        if speed is None:
            probe = min(10.0 * cfg.target_segment_length, 1.0 - s_j)
        else:
            probe = 2.0 * cfg.target_segment_length / speed
        s_next, ratio, e_next, n_eval = _find_root(step, s_j, target, tol, probe)
        roots.append(n_eval)
        dl = math.sqrt(max(0.0, 1.0 - ratio))
        hint = _next_hint(h, backend, s_next, e_next)
        if j == 0:
            if find_t1 and s_next < 1.0:
                t1 = _auto_first_step(h, psi0, s_next, hint, backend, spt, t1)
            dt = t1
        else:
            # a zero-length final segment would repeat t; keep t strictly increasing
            dt = t1 * max(dl, 1e-12) / dl_pts[1]
        t_pts.append(t_pts[-1] + dt)
        s_pts.append(s_next)
        dl_pts.append(dl)
        if dl > 0.0:
            speed = dl / (s_next - s_j)
        j += 1
    psi = _evolve_to(h, np.array(t_pts), np.array(s_pts), psi0, spt)
    last = _Step(h, 1.0, psi, backend, hint, (j,))
    f_pts.append(last.f)
    return SchedulePoints(
        np.array(t_pts), np.array(s_pts), np.array(dl_pts), np.array(f_pts),
        tuple(roots), float(t1), cfg.target_segment_length, backend.describe(),
    )


def build_constant_speed(
    h: InterpolatedHamiltonian,
    cfg: BuilderConfig,
    steps_per_unit_time: float | None = None,
) -> tuple[TabulatedSchedule, SchedulePoints]:
    """Build the segmented constant-speed schedule and its point record.

    With an explicit first_step_time a point whose fidelity falls below the floor
    aborts the build. Without one, t1 starts from the smallest power of two that
    keeps the first segment above 0.9 fidelity, and is doubled (restarting the
    build) whenever a later point falls below the floor.
    """
    spt = steps_per_unit_time
    if spt is None:
        spt = default_steps_per_unit_time(h.max_norm())
    EvolutionConfig(1.0, spt).n_steps(h.max_norm())
    auto = cfg.first_step_time is None
    t1 = AUTO_T1_START if auto else cfg.first_step_time
    find_t1 = auto
    for _ in range(AUTO_T1_MAX_DOUBLINGS + 1):
        try:
            pts = _run(h, cfg, t1, spt, find_t1)
        except _FloorHit as hit:
            if not auto:
                raise BuildAborted(
                    f"fidelity f_{hit.j}={hit.f:.4f} fell below the floor {cfg.fidelity_floor}; "
                    f"increase the first step time (currently t1={t1:.4g})"
                ) from None
            t1, find_t1 = 2.0 * hit.t1, False
            continue
        return pts.schedule(), pts
    raise BuildAborted(f"fidelity floor not met after {AUTO_T1_MAX_DOUBLINGS} doublings of t1")


def segment_count_estimate(length: float, dl_target: float) -> float:
    if not (length >= 0 and dl_target > 0):
        raise ValidationError("need L >= 0 and dl_t > 0")
    return length / dl_target


@dataclass(frozen=True)
class CostReport:
    segments: int
    mean_root_evaluations: float
    total_samples: int
    evolution_time: float
    projection_time: float

    @property
    def total_time(self) -> float:
        return self.evolution_time + self.projection_time

    def as_dict(self) -> dict:
        return {
            "segments": self.segments,
            "mean_root_evaluations": self.mean_root_evaluations,
            "total_samples": self.total_samples,
            "T": self.evolution_time,
            "T_p": self.projection_time,
            "T_tot": self.total_time,
        }


def projection_time(backend: ProjectorBackend) -> float:
    """Extra evolution time per projection: 2 beta for filter backends, 0 for the oracle."""
    if isinstance(backend, (GaussianBackend, GaussianMCBackend)):
        return 2.0 * backend.beta
    return 0.0


def total_cost_report(pts: SchedulePoints, backend: ProjectorBackend, root_evals=None) -> CostReport:
    roots = pts.root_evaluations if root_evals is None else tuple(root_evals)
    m = pts.segments
    mean_roots = float(np.mean(roots)) if roots else 0.0
    n_nu = backend.n_samples if isinstance(backend, GaussianMCBackend) else 0
    total = int(round(m * (mean_roots + 1.0) * n_nu))
    return CostReport(m, mean_roots, total, pts.total_time, projection_time(backend))
