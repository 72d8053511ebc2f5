"""Dual profile phi and neutral fraction dynamics."""

import numpy as np
import pytest

from lineagelab import (DegenerateWeight, Field, Grid, KernelSpec,
                        ModelParams, SelectionSpec, StabilityViolation,
                        adaptive_horizon, asymptotic_proportion,
                        evolve_dirac_fraction, evolve_fraction,
                        indicator_fraction, integrate, positivity_window,
                        solve_dual_phi, solve_equilibrium)

from util import l1


def test_dual_contracts(bench_eq, bench_dual):
    phi = bench_dual.phi
    assert np.all(phi.values >= 0.0)
    assert bench_dual.normalization == pytest.approx(1.0, rel=1e-12)
    assert bench_dual.residual <= 1e-8 * float(np.max(phi.values))


def test_dual_is_primal_without_transport():
    """c = 0 makes the operator self-adjoint, so phi is F up to scale."""
    params = ModelParams(beta=2.0, mu0=1.0, sigma=0.1, c=0.0,
                         selection=SelectionSpec(kind="quadratic",
                                                 alpha=2.0),
                         kernel=KernelSpec())
    eq = solve_equilibrium(params, Grid(-3.0, 3.0, 601))
    dual = solve_dual_phi(eq.ctx, eq.F)
    a = eq.F.values / np.max(eq.F.values)
    b = dual.phi.values / np.max(dual.phi.values)
    assert np.max(np.abs(a - b)) <= 1e-8


def test_dual_diffusive_closed_form(gauss_eq, gauss_params):
    """For the second order operator the dual is exactly
    F(z) exp(2 c z / (beta sigma^2)) up to scale."""
    dual = solve_dual_phi(gauss_eq.ctx, gauss_eq.F, diffusive=True)
    grid = gauss_eq.F.grid
    p = gauss_params
    tilt = np.exp(2.0 * p.c * grid.z / (p.beta * p.sigma ** 2))
    ref = gauss_eq.F.values * tilt
    win = positivity_window(gauss_eq.F.values)
    a = dual.phi.values / np.max(dual.phi.values[win])
    b = ref / np.max(ref[win])
    assert np.max(np.abs(a[win] - b[win])) <= 1e-3


def test_equilibrium_is_stationary(bench_eq):
    states = evolve_fraction(bench_eq.ctx, bench_eq.F, t_end=5.0)
    final = states[-1].v.values
    assert np.max(np.abs(final - bench_eq.F.values)) <= 1e-10 * np.max(
        bench_eq.F.values)


def test_diffusive_march_is_stationary(gauss_eq):
    states = evolve_fraction(gauss_eq.ctx, gauss_eq.F, t_end=5.0,
                             diffusive=True)
    final = states[-1].v.values
    assert np.max(np.abs(final - gauss_eq.F.values)) <= 1e-10 * np.max(
        gauss_eq.F.values)


def test_march_is_linear(bench_eq):
    a = evolve_fraction(bench_eq.ctx,
                        Field(bench_eq.F.grid, 0.3 * bench_eq.F.values),
                        t_end=2.0)[-1].v.values
    b = evolve_fraction(bench_eq.ctx, bench_eq.F, t_end=2.0)[-1].v.values
    assert np.allclose(a, 0.3 * b, rtol=1e-12, atol=1e-15)


def test_partition_sums_to_whole(bench_eq):
    """Two complementary slices keep summing to F while they relax."""
    grid = bench_eq.F.grid
    left = indicator_fraction(bench_eq.F, grid.z_min - 1.0, 0.0)
    right = indicator_fraction(bench_eq.F, 0.0, grid.z_max + 1.0)
    assert np.array_equal(left.v.values + right.v.values,
                          bench_eq.F.values)
    a = evolve_fraction(bench_eq.ctx, left.v, t_end=5.0)[-1].v.values
    b = evolve_fraction(bench_eq.ctx, right.v, t_end=5.0)[-1].v.values
    gap = np.max(np.abs(a + b - bench_eq.F.values))
    assert gap <= 1e-10 * np.max(bench_eq.F.values)


def test_dynasties_rebuild_the_population(bench_eq):
    grid = bench_eq.F.grid
    win = positivity_window(bench_eq.F.values)
    rebuilt = np.zeros(grid.n)
    for j in np.where(win)[0]:
        states = evolve_dirac_fraction(bench_eq.ctx, bench_eq.F,
                                       grid.z[j], t_end=0.0)
        rebuilt += states[-1].v.values * grid.dz
    assert np.allclose(rebuilt[win], bench_eq.F.values[win],
                       rtol=1e-14, atol=0.0)


def test_dynasty_off_window_raises(bench_eq):
    with pytest.raises(DegenerateWeight):
        evolve_dirac_fraction(bench_eq.ctx, bench_eq.F, 2.95, t_end=1.0)


def test_proportions(bench_eq, bench_dual):
    grid = bench_eq.F.grid
    assert asymptotic_proportion(bench_dual, bench_eq.F) == pytest.approx(
        1.0, rel=1e-12)
    scaled = Field(grid, 0.3 * bench_eq.F.values)
    assert asymptotic_proportion(bench_dual, scaled) == pytest.approx(
        0.3, rel=1e-12)
    left = indicator_fraction(bench_eq.F, grid.z_min - 1.0, 0.0)
    right = indicator_fraction(bench_eq.F, 0.0, grid.z_max + 1.0)
    p_l = asymptotic_proportion(bench_dual, left.v)
    p_r = asymptotic_proportion(bench_dual, right.v)
    assert 0.0 < p_l < 1.0 and 0.0 < p_r < 1.0
    assert p_l + p_r == pytest.approx(1.0, rel=1e-9)


def test_pairing_integral_is_conserved(bench_eq, bench_dual):
    left = indicator_fraction(bench_eq.F, -10.0, -0.9)
    p0 = asymptotic_proportion(bench_dual, left.v)
    final = evolve_fraction(bench_eq.ctx, left.v, t_end=5.0)[-1].v
    p5 = asymptotic_proportion(bench_dual, final)
    assert p5 == pytest.approx(p0, rel=1e-9)


def test_comparison_and_positivity(bench_eq):
    left = indicator_fraction(bench_eq.F, -10.0, -0.9)
    states = evolve_fraction(bench_eq.ctx, left.v, t_end=5.0,
                             snapshots=[1.0, 2.0, 3.0, 4.0])
    top = np.max(bench_eq.F.values)
    for st in states:
        assert np.min(st.v.values) >= -1e-12 * top
        assert np.max(st.v.values - bench_eq.F.values) <= 1e-10 * top


def test_fraction_input_validation(bench_eq):
    grid = bench_eq.F.grid
    bad = Field(grid, -np.ones(grid.n))
    with pytest.raises(ValueError):
        evolve_fraction(bench_eq.ctx, bad, t_end=1.0)
    with pytest.raises(ValueError):
        evolve_fraction(bench_eq.ctx, bench_eq.F, t_end=-1.0)
    with pytest.raises(StabilityViolation):
        evolve_fraction(bench_eq.ctx, bench_eq.F, t_end=1.0, dt=1.0)
    only = evolve_fraction(bench_eq.ctx, bench_eq.F, t_end=0.0)
    assert len(only) == 1 and only[0].t == 0.0


def test_snapshot_times(bench_eq):
    left = indicator_fraction(bench_eq.F, -10.0, -0.9)
    states = evolve_fraction(bench_eq.ctx, left.v, t_end=3.0,
                             snapshots=np.array([1.0, 2.5]))
    times = [st.t for st in states]
    assert times[0] == 0.0 and times[-1] == pytest.approx(3.0)
    assert len(times) == 4
    assert abs(times[1] - 1.0) < 0.05 and abs(times[2] - 2.5) < 0.05


def test_adaptive_horizon_relaxes(bench_eq, bench_dual):
    left = indicator_fraction(bench_eq.F, -10.0, -0.9)
    res = adaptive_horizon(bench_eq.ctx, bench_eq.F, bench_dual, left.v)
    assert res.times[0] == 0.0
    assert res.times[-1] == res.state.t
    assert all(b < a for a, b in zip(res.defects, res.defects[1:]))
    mass_F = integrate(bench_eq.F)
    assert res.defects[-1] <= 1e-2 * res.proportion * mass_F
    final_gap = l1(bench_eq.F.grid, res.state.v.values,
                   res.proportion * bench_eq.F.values)
    assert final_gap == pytest.approx(res.defects[-1], rel=1e-12)
