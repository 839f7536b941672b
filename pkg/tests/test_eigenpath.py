import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adiaspeed.eigenpath import (
    PathTable,
    arc_length,
    asp_time_estimate,
    c_functional,
    constant_speed_schedule,
    curvature_and_qpp,
    derivatives,
    metric_speed,
    path_length,
    projector_speed,
    refine_grid,
    segment_length,
    speed_profile,
    track_eigenstate,
)
from adiaspeed.errors import DegeneracyError, RefineGridError, ValidationError
from adiaspeed.experiments import fit_power_law
from adiaspeed.hamiltonians import InterpolatedHamiltonian, grover_effective, grover_fields, landau_zener
from adiaspeed.operators import HermitianOperator, random_hermitian
from adiaspeed.schedules import grover_optimal, linear


def bloch_angle(n_items, s):
    v_z, v_x = grover_fields(n_items, s)
    return np.arctan2(v_x, v_z)


def two_level(theta):
    return np.array([math.cos(theta / 2), math.sin(theta / 2)], dtype=complex)


def random_path(seed=7, dim=4):
    rng = np.random.default_rng(seed)
    return InterpolatedHamiltonian(
        HermitianOperator(random_hermitian(dim, rng)), HermitianOperator(random_hermitian(dim, rng))
    )


@pytest.fixture(scope="module")
def lz02():
    h = landau_zener(0.2)
    return h, track_eigenstate(h, refine_grid(h, max_segment=0.002))


def test_grover_bloch_rotation():
    grid = np.linspace(0, 1, 101)
    table = track_eigenstate(grover_effective(4), grid)
    # ground state of I/2 - (v.sigma)/2 is the +1 eigenvector of v.sigma
    theta = 2 * np.arctan2(table.states[:, 1].real, table.states[:, 0].real)
    assert np.all(np.diff(theta) < 0)
    np.testing.assert_allclose(theta, bloch_angle(4, grid), atol=1e-12)
    assert theta[0] == pytest.approx(math.atan2(math.sqrt(3) / 2, -0.5))
    assert theta[-1] == pytest.approx(0.0, abs=1e-15)


def test_gauge_is_parallel():
    h = random_path()
    table = track_eigenstate(h, refine_grid(h, max_segment=0.02))
    ov = np.einsum("ij,ij->i", table.states[:-1].conj(), table.states[1:])
    assert np.all(np.abs(ov.imag) < 1e-12) and np.all(ov.real >= 0)
    np.testing.assert_allclose(np.linalg.norm(table.states, axis=1), 1, atol=1e-12)


def test_landau_zener_gap_profile():
    table = track_eigenstate(landau_zener(0.1), np.linspace(0, 1, 101))
    k = int(np.argmin(table.gap))
    assert table.s[k] == pytest.approx(0.5) and table.gap[k] == pytest.approx(0.2)
    np.testing.assert_allclose(table.excited_energy - table.energy, table.gap, atol=1e-12)


def test_segment_length_closed_form():
    assert segment_length(two_level(0.3), two_level(0.5)) == pytest.approx(math.sin(0.1), abs=1e-14)
    assert segment_length(two_level(0.3), two_level(0.5)) == pytest.approx(0.0998334166, abs=1e-10)


def test_path_length_grover_n4():
    h = grover_effective(4)
    table = track_eigenstate(h, refine_grid(h, max_segment=0.002))
    assert path_length(table) == pytest.approx(math.pi / 3, rel=1e-5)
    assert arc_length(table)[-1] == pytest.approx(math.pi / 3, rel=1e-9)


def test_refine_grid_bounds_segments():
    h = landau_zener(0.01)
    table = track_eigenstate(h, refine_grid(h, max_segment=0.01), excited=False)
    assert np.sqrt(1 - table.overlaps() ** 2).max() <= 0.01


def test_coarse_grid_rejected():
    # one step across a narrow crossing lands on the diabatic level
    with pytest.raises(RefineGridError) as err:
        track_eigenstate(landau_zener(0.001), [0.0, 1.0])
    assert err.value.s == 1.0


def test_narrow_crossing_resolved():
    delta = 0.001
    h = landau_zener(delta)
    table = track_eigenstate(h, refine_grid(h, max_segment=0.01), excited=False)
    exact = (math.atan2(delta, -1) - math.atan2(delta, 1)) / 2
    assert path_length(table) == pytest.approx(exact, rel=1e-4)


def test_true_crossing_reported():
    z = HermitianOperator(np.diag([1.0, -1.0]))
    with pytest.raises(DegeneracyError):
        refine_grid(InterpolatedHamiltonian(z, z * -1.0), n_initial=4)


def test_degenerate_level():
    d = HermitianOperator(np.diag([0.0, 0.0, 1.0]))
    with pytest.raises(DegeneracyError):
        track_eigenstate(InterpolatedHamiltonian(d, d), [0.0, 1.0])


def test_grid_validation():
    h = landau_zener(0.5)
    for grid in ([0.0, 0.5], [0.0, 0.6, 0.4, 1.0], [0.0]):
        with pytest.raises(ValidationError):
            track_eigenstate(h, grid)


def test_samples_and_csv(tmp_path):
    table = track_eigenstate(landau_zener(0.5), np.linspace(0, 1, 11))
    samples = table.samples
    assert len(samples) == 11 and samples[3].s == table.s[3]
    table.to_csv(tmp_path / "p.csv")
    rows = list(csv.reader((tmp_path / "p.csv").open()))
    assert rows[0] == ["s", "energy", "gap", "excited_energy"]
    assert len(rows) == 12 and float(rows[5][2]) == table.gap[4]


def test_derivatives_exact_on_quadratics():
    x = np.sort(np.random.default_rng(1).uniform(0, 1, 12))
    d1, d2 = derivatives(x, 3 * x**2 - x + 2)
    np.testing.assert_allclose(d1, 6 * x - 1, atol=1e-9)
    np.testing.assert_allclose(d2, 6.0, atol=1e-6)


def test_lemma_third_order():
    n_items, s = 16, 0.3
    errs = []
    for ds in (1e-2, 5e-3, 2.5e-3):
        a, b = bloch_angle(n_items, s), bloch_angle(n_items, s + ds)
        dl = abs(a - b) / 2
        ov2 = abs(np.vdot(two_level(a), two_level(b))) ** 2
        errs.append(abs(ov2 - (1 - dl**2)))
    assert errs[0] / errs[1] >= 7 and errs[1] / errs[2] >= 7


def test_lemma_third_order_general_path():
    h = random_path()
    fine = track_eigenstate(h, np.linspace(0, 1, 200_001), excited=False)
    l = arc_length(fine)
    k0 = 60_000
    errs = []
    for step in (2000, 1000, 500):
        dl = l[k0 + step] - l[k0]
        ov2 = abs(np.vdot(fine.states[k0], fine.states[k0 + step])) ** 2
        errs.append(abs(ov2 - (1 - dl**2)))
    assert errs[0] / errs[1] >= 7 and errs[1] / errs[2] >= 7


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_gauge_invariance(seed):
    rng = np.random.default_rng(seed)
    table = track_eigenstate(grover_effective(64), np.linspace(0, 1, 401), excited=False)
    phases = np.exp(2j * np.pi * rng.uniform(size=len(table)))
    phased = PathTable(table.s, table.energy, table.states * phases[:, None], table.gap)
    assert path_length(phased) == pytest.approx(path_length(table), abs=1e-12)
    a, b = table.states[10], table.states[11]
    assert segment_length(phases[0] * a, phases[1] * b) == pytest.approx(segment_length(a, b), abs=1e-12)


def test_optimal_schedule_constant_speed():
    n_items = 2**10
    h = grover_effective(n_items)
    table = track_eigenstate(h, refine_grid(h, max_segment=0.002), excited=False)
    v = speed_profile(grover_optimal(n_items), table, np.linspace(0, 1, 2001))
    assert np.std(v) / np.mean(v) <= 1e-3
    assert np.mean(v) == pytest.approx(path_length(table), rel=1e-3)


def test_linear_speed_peaked():
    h = grover_effective(2**10)
    table = track_eigenstate(h, refine_grid(h, max_segment=0.002), excited=False)
    tau = np.linspace(0, 1, 2001)
    v = speed_profile(linear(), table, tau)
    assert abs(tau[np.argmax(v)] - 0.5) < 0.01
    assert v.max() / np.median(v) > 100
    # closed form: ||dPhi/ds|| = |dtheta/ds| / 2
    s = table.s
    theta = bloch_angle(2**10, s)
    ref = np.abs(np.gradient(theta, s)) / 2
    mid = slice(5, -5)
    np.testing.assert_allclose(metric_speed(table)[mid], ref[mid], rtol=2e-3)


def test_projector_speed_equals_speed():
    h = random_path()
    table = track_eigenstate(h, refine_grid(h, max_segment=0.002))
    sched = grover_optimal(8)
    tau = sched.inverse(table.s)
    pdot = projector_speed(table, sched)
    v = speed_profile(sched, table, tau)
    np.testing.assert_allclose(pdot[1:-1], v[1:-1], rtol=1e-4)


def test_curvature_identity_random_path():
    h = random_path(dim=4)
    grid = np.linspace(0, 1, 1001)
    table = track_eigenstate(h, grid)
    for k in (100, 350, 600, 900):
        rep = curvature_and_qpp(table, k, linear())
        assert rep.kappa > 0
        assert rep.qpp_direct == pytest.approx(rep.qpp_geometric, rel=1e-4)


def test_geodesic_two_level_has_zero_curvature():
    table = track_eigenstate(grover_effective(64), np.linspace(0, 1, 2001))
    # away from s=1/2, where the linear schedule has zero acceleration
    for k in (300, 700, 1700):
        rep = curvature_and_qpp(table, k, linear())
        assert rep.kappa < 1e-3 * max(1.0, rep.speed)
        assert rep.qpp_direct == pytest.approx(abs(rep.acceleration), rel=1e-4)


def test_constant_speed_two_level_has_no_acceleration():
    h = landau_zener(0.5)
    table = track_eigenstate(h, refine_grid(h, max_segment=0.002))
    sched = constant_speed_schedule(table)
    fine = track_eigenstate(h, refine_grid(h, max_segment=0.0005))
    length = path_length(fine)
    for k in (len(fine) // 4, len(fine) // 2, 3 * len(fine) // 4):
        rep = curvature_and_qpp(fine, k, sched)
        assert rep.qpp_direct < 0.02 * length**2


def test_curvature_interior_only():
    table = track_eigenstate(landau_zener(0.5), np.linspace(0, 1, 11))
    with pytest.raises(ValidationError):
        curvature_and_qpp(table, 0, linear())


def test_c_functional_ordering():
    h = grover_effective(2**8)
    table = track_eigenstate(h, refine_grid(h, max_segment=0.002))
    c_lin = c_functional(linear(), table)
    c_css = c_functional(constant_speed_schedule(table), table)
    assert c_css.total < c_lin.total
    assert all(t >= 0 for t in c_css.terms)


def test_c_functional_two_forms(lz02):
    h, table = lz02
    for sched in (linear(), constant_speed_schedule(table)):
        c = c_functional(sched, table)
        assert c.total_projector == pytest.approx(c.total, rel=1e-3)
        assert c.total == pytest.approx(sum(c.terms), rel=1e-12)


def test_c_functional_frozen_value(lz02):
    # frozen from an independent run of the geometric form at max_segment=0.002
    _, table = lz02
    assert c_functional(linear(), table).total == pytest.approx(44.6298, rel=1e-3)


def test_asp_estimate_constant_path():
    d = HermitianOperator(np.diag([0.0, 1.0]))
    h = InterpolatedHamiltonian(d, d)
    assert asp_time_estimate(track_eigenstate(h, np.linspace(0, 1, 5)), h, linear()) == 0.0


def test_asp_estimate_linear_closed_form(lz02):
    h, table = lz02
    # at s=1/2: |<0|2Z|1>| / (2 delta)^2 with the Z matrix element equal to 1
    assert asp_time_estimate(table, h, linear()) == pytest.approx(1 / (2 * 0.2**2), rel=1e-6)


def test_asp_estimate_needs_excited():
    h = landau_zener(0.3)
    with pytest.raises(ValidationError):
        asp_time_estimate(track_eigenstate(h, np.linspace(0, 1, 33), excited=False), h, linear())


def test_asp_estimate_slopes():
    lin, css = [], []
    for delta in (0.2, 0.1, 0.05):
        h = landau_zener(delta)
        table = track_eigenstate(h, refine_grid(h, max_segment=0.002))
        lin.append((2 * delta, asp_time_estimate(table, h, linear())))
        css.append((2 * delta, asp_time_estimate(table, h, constant_speed_schedule(table))))
    assert fit_power_law(lin).slope == pytest.approx(-2.0, abs=0.1)
    assert fit_power_law(css).slope == pytest.approx(-1.0, abs=0.1)
