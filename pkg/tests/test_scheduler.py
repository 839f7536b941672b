import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adiaspeed.eigenpath import path_length, refine_grid, speed_profile, track_eigenstate
from adiaspeed.errors import BuildAborted, ConfigurationError
from adiaspeed.hamiltonians import InterpolatedHamiltonian, grover_effective, grover_fields, landau_zener
from adiaspeed.operators import HermitianOperator, eig
from adiaspeed.projector import ExactBackend, GaussianBackend, GaussianMCBackend
from adiaspeed.scheduler import (
    BuilderConfig,
    build_constant_speed,
    load_points,
    overlap_ratio,
    projection_time,
    segment_count_estimate,
    total_cost_report,
)
from adiaspeed.schedules import grover_optimal

DENSE_TAU = np.linspace(0, 1, 4001)


@pytest.fixture(scope="module")
def grover8_builds():
    h = grover_effective(2**8)
    return h, {dl: build_constant_speed(h, BuilderConfig(dl)) for dl in (0.2, 0.1, 0.05)}


@pytest.fixture(scope="module")
def grover8_table():
    h = grover_effective(2**8)
    return track_eigenstate(h, refine_grid(h, max_segment=0.002), excited=False)


def test_config_validation():
    for kwargs in ({"target_segment_length": 0.0}, {"first_step_time": -1.0}, {"fidelity_floor": 1.0}, {"root_tolerance": 0.0}):
        with pytest.raises(ConfigurationError):
            BuilderConfig(**kwargs)
    assert BuilderConfig().tolerance == pytest.approx(0.05 * 0.04)


def test_overlap_ratio_exact_matches_states():
    h = grover_effective(2**6)
    psi = eig(h.at(0.4)).vector(0)
    ratio = overlap_ratio(h, 0.4, 0.45, psi, ExactBackend(), level_hint=(None, 0))
    ref = abs(np.vdot(eig(h.at(0.45)).vector(0), psi)) ** 2
    assert ratio == pytest.approx(ref, rel=1e-12)
    assert overlap_ratio(h, 0.4, 0.4, psi, ExactBackend(), level_hint=(None, 0)) == pytest.approx(1.0)


def test_overlap_ratio_impure_state():
    # ratio is a property of the tracked level, not of the excited admixture
    h = grover_effective(2**6)
    v = eig(h.at(0.4)).eigenvectors
    psi = math.sqrt(0.7) * v[:, 0] + math.sqrt(0.3) * v[:, 1]
    ratio = overlap_ratio(h, 0.4, 0.45, psi, ExactBackend(), level_hint=(None, 0))
    assert ratio == pytest.approx(abs(np.vdot(eig(h.at(0.45)).vector(0), v[:, 0])) ** 2, rel=1e-12)


def test_points_follow_optimal_schedule():
    n_items = 2**10
    sched, pts = build_constant_speed(grover_effective(n_items), BuilderConfig(0.2))
    ref = grover_optimal(n_items)
    assert np.abs(pts.s - ref(pts.tau)).max() <= 0.05
    assert pts.s[0] == 0.0 and pts.s[-1] == 1.0
    assert np.all(np.diff(pts.t) > 0) and np.all(np.diff(pts.s) > 0)
    np.testing.assert_allclose(sched(pts.tau), pts.s, atol=1e-15)


def test_segment_count_matches_length():
    h = grover_effective(2**10)
    length = path_length(track_eigenstate(h, refine_grid(h, max_segment=0.002), excited=False))
    _, pts = build_constant_speed(h, BuilderConfig(0.2))
    assert abs(pts.segments - math.ceil(segment_count_estimate(length, 0.2))) <= 2


def test_convergence_to_optimal(grover8_builds):
    _, builds = grover8_builds
    ref = grover_optimal(2**8)
    at_points = [np.abs(p.s - ref(p.tau)).max() for _, p in builds.values()]
    dense = [np.abs(sc(DENSE_TAU) - ref(DENSE_TAU)).max() for sc, _ in builds.values()]
    assert at_points[0] > at_points[1] > at_points[2]
    assert dense[0] > dense[1] > dense[2]


def test_average_speed_identity(grover8_builds):
    _, builds = grover8_builds
    for _, pts in builds.values():
        per_segment = pts.dl[1:] / np.diff(pts.tau)
        np.testing.assert_allclose(per_segment, pts.dl.sum(), rtol=1e-9)


def test_speed_std_decreases(grover8_builds, grover8_table):
    _, builds = grover8_builds
    stds = []
    for sc, _ in builds.values():
        v = speed_profile(sc, grover8_table, DENSE_TAU)
        stds.append(np.std(v) / np.mean(v))
    assert stds[0] > stds[1] > stds[2]
    assert stds[2] <= 0.15


@pytest.mark.xfail(
    strict=True,
    reason="measured relative speed std 0.266 at dl_t=0.2 (N=2^8): 8 PCHIP segments cannot follow the peaked "
    "speed of the middle segment; threshold holds from dl_t=0.1 (0.125)",
)
def test_speed_std_threshold_at_default_target(grover8_builds, grover8_table):
    sc, _ = grover8_builds[1][0.2]
    v = speed_profile(sc, grover8_table, DENSE_TAU)
    assert np.std(v) / np.mean(v) <= 0.15


def test_trivial_path():
    d = HermitianOperator(np.diag([0.0, 1.0]))
    _, pts = build_constant_speed(InterpolatedHamiltonian(d, d), BuilderConfig(0.2))
    assert pts.segments == 1 and pts.s[1] == 1.0 and pts.dl[1] == pytest.approx(0.0, abs=1e-7)


def test_explicit_t1_floor_aborts():
    with pytest.raises(BuildAborted, match="increase the first step time"):
        build_constant_speed(grover_effective(2**10), BuilderConfig(0.2, first_step_time=0.05))


def test_csv_round_trip(tmp_path, grover8_builds):
    _, builds = grover8_builds
    pts = builds[0.2][1]
    text = pts.to_csv(tmp_path / "pts.csv")
    assert text.splitlines()[1] == "j,t_j,s_j,dl_j,f_j"
    assert text.startswith(f"# T={pts.total_time!r}".replace("np.float64(", "")[:8])
    back = load_points(tmp_path / "pts.csv")
    for name in ("t", "s", "dl", "f"):
        assert np.array_equal(getattr(back, name), getattr(pts, name))
    assert back.first_step_time == pts.first_step_time and back.backend == "exact"
    np.testing.assert_allclose(back.schedule()(DENSE_TAU), pts.schedule()(DENSE_TAU), atol=0)


def test_fidelities_recorded(grover8_builds):
    _, builds = grover8_builds
    for _, pts in builds.values():
        assert pts.f.size == pts.s.size
        assert np.all(pts.f >= 0.5) and np.all(pts.f <= 1 + 1e-12)


def test_mc_build_deterministic():
    h = grover_effective(2**6)
    backend = GaussianMCBackend(2.0 * 8, 2000, seed=3)
    a = build_constant_speed(h, BuilderConfig(0.2, backend=backend))[1]
    b = build_constant_speed(h, BuilderConfig(0.2, backend=backend))[1]
    for name in ("t", "s", "dl", "f"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.root_evaluations == b.root_evaluations


def test_gaussian_build_close_to_exact():
    h = grover_effective(2**6)
    exact = build_constant_speed(h, BuilderConfig(0.2))[1]
    filt = build_constant_speed(h, BuilderConfig(0.2, backend=GaussianBackend(2.0 * 8)))[1]
    # compare arc-length positions l(s) = (theta(0) - theta(s))/2: past the gap the
    # path is nearly straight in s, so small arc-length offsets become large s offsets
    v_z, v_x = grover_fields(2**6, np.concatenate([[0.0], exact.s, filt.s]))
    theta = np.arctan2(v_x, v_z)
    arc = (theta[0] - theta[1:]) / 2
    l_exact, l_filt = arc[: exact.s.size], arc[exact.s.size :]
    k = min(l_exact.size, l_filt.size) - 1
    # filter leakage at beta*gap = 2 shortens the measured segments near the gap
    assert np.abs(l_exact[:k] - l_filt[:k]).max() <= 0.1


def test_segment_count_estimate():
    assert segment_count_estimate(1.0, 0.2) == pytest.approx(5.0)
    assert segment_count_estimate(math.pi / 3, 0.2) == pytest.approx(5.236, abs=1e-3)
    assert segment_count_estimate(math.pi / 4, 0.2) == pytest.approx(3.927, abs=1e-3)


def test_cost_report(grover8_builds):
    _, builds = grover8_builds
    pts = builds[0.2][1]
    rep = total_cost_report(pts, ExactBackend())
    assert rep.total_samples == 0 and rep.projection_time == 0.0
    assert rep.total_time == pts.total_time
    gap = 1 / 16
    assert projection_time(GaussianBackend(2 / gap)) == pytest.approx(4 / gap)
    mc = total_cost_report(pts, GaussianMCBackend(2 / gap, 10_000), root_evals=[9] * pts.segments)
    assert mc.total_samples == pts.segments * 10 * 10_000
    assert mc.total_time - mc.evolution_time == pytest.approx(2 * (2 / gap))


@settings(max_examples=8, deadline=None)
@given(delta=st.floats(0.1, 1.0), dl=st.sampled_from([0.15, 0.2, 0.3]))
def test_builder_invariants(delta, dl):
    _, pts = build_constant_speed(landau_zener(delta), BuilderConfig(dl))
    assert np.all(np.diff(pts.s) > 0) and pts.s[-1] == 1.0
    np.testing.assert_allclose(pts.dl[1:] / np.diff(pts.tau), pts.dl.sum(), rtol=1e-9)
    # interior segments land on the target within the root tolerance
    tol = 0.05 * dl**2
    assert np.all(np.abs(pts.dl[1:-1] ** 2 - dl**2) <= tol + 1e-12)
