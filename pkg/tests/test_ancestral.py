"""Ancestral lineage process: semigroup, forward density, Monte Carlo."""

import numpy as np
import pytest

from lineagelab import (DegenerateWeight, Field, ancestral_stats,
                        apply_L_star, integrate, monte_carlo_Y,
                        monte_carlo_Y_diffusive, ou_moments,
                        positivity_window, semigroup_apply,
                        y_infinity_density)
from lineagelab.ancestral import evolve_forward_density
from lineagelab.fractions import fraction_dt_bound


def test_semigroup_conserves_constants(bench_eq):
    grid = bench_eq.F.grid
    ones = Field(grid, np.ones(grid.n))
    out = semigroup_apply(bench_eq.ctx, bench_eq.F, ones, s=3.0)
    win = positivity_window(bench_eq.F.values)
    assert np.max(np.abs(out.values[win] - 1.0)) <= 1e-9
    assert np.all(np.isnan(out.values[~win]))


def test_semigroup_validates_time(bench_eq):
    grid = bench_eq.F.grid
    ones = Field(grid, np.ones(grid.n))
    with pytest.raises(ValueError):
        semigroup_apply(bench_eq.ctx, bench_eq.F, ones, s=-1.0)


def test_forward_density_conserves_mass(bench_eq):
    """The raw (unnormalized) law of Y_s keeps unit mass: the adjoint
    march pairs against the stationary F."""
    grid = bench_eq.F.grid
    j0 = grid.index_of(-0.9)
    q = np.zeros(grid.n)
    q[j0] = (1.0 / grid.dz) / float(bench_eq.F.values[j0])
    dt = 0.5 * fraction_dt_bound(bench_eq.ctx)
    steps = int(np.ceil(5.0 / dt))
    dt = 5.0 / steps
    mass0 = integrate(Field(grid, bench_eq.F.values * q))
    for _ in range(steps):
        q = q + dt * apply_L_star(bench_eq.ctx, Field(grid, q)).values
    mass5 = integrate(Field(grid, bench_eq.F.values * q))
    assert abs(mass5 - mass0) <= 1e-6 * mass0
    assert mass0 == pytest.approx(1.0, rel=1e-12)


def test_density_snapshots_are_probabilities(bench_eq):
    densities = evolve_forward_density(bench_eq.ctx, bench_eq.F, -0.9,
                                       [0.0, 1.0, 3.0])
    assert [d.s for d in densities] == [0.0, 1.0, 3.0]
    for d in densities:
        assert np.min(d.rho.values) >= -1e-12
        assert integrate(d.rho) == pytest.approx(1.0, rel=1e-12)


def test_density_route_matches_semigroup_route(bench_eq):
    """Two routes to E_z[psi(Y_s)]: pair the forward density with psi, or
    march the conjugated semigroup and read it at z."""
    grid = bench_eq.F.grid
    psi = Field(grid, np.tanh(grid.z))
    s = 2.0
    rho = evolve_forward_density(bench_eq.ctx, bench_eq.F, -0.9, [s])[-1].rho
    lhs = integrate(Field(grid, rho.values * psi.values))
    rhs = semigroup_apply(bench_eq.ctx, bench_eq.F, psi, s)
    j0 = grid.index_of(-0.9)
    assert lhs == pytest.approx(rhs.values[j0], rel=1e-6)


def test_stats_match_ou_in_diffusive_regime(gauss_eq, gauss_params):
    s = np.array([0.0, 1.0, 2.0])
    series = ancestral_stats(gauss_eq.ctx, gauss_eq.F, -0.5, s,
                             diffusive=True)
    mean_ref, var_ref = ou_moments(gauss_params, -0.5, s)
    assert np.max(np.abs(series.mean - mean_ref)) <= 5e-3
    assert np.max(np.abs(series.variance - var_ref)) <= 5e-3
    assert series.start == -0.5
    assert np.all(series.q05 <= series.mean)
    assert np.all(series.mean <= series.q95)


def test_y_infinity_density(bench_eq, bench_dual):
    dens = y_infinity_density(bench_eq.F, bench_dual.phi)
    assert integrate(dens) == pytest.approx(1.0, rel=1e-12)
    mean = integrate(Field(dens.grid, dens.grid.z * dens.values))
    width = dens.grid.z_max - dens.grid.z_min
    assert abs(mean) <= 1e-3 * width
    var = integrate(Field(dens.grid, dens.grid.z ** 2 * dens.values)) - mean ** 2
    assert var > 0.0


def test_monte_carlo_is_deterministic(bench_eq):
    a = monte_carlo_Y(bench_eq.ctx, bench_eq.F, -0.9, 1.0, 200, seed=42)
    b = monte_carlo_Y(bench_eq.ctx, bench_eq.F, -0.9, 1.0, 200, seed=42)
    c = monte_carlo_Y(bench_eq.ctx, bench_eq.F, -0.9, 1.0, 200, seed=43)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert a.samples.shape == (200, 21)


def test_monte_carlo_tracks_pde(bench_eq):
    s = np.linspace(0.0, 2.0, 5)
    mc = monte_carlo_Y(bench_eq.ctx, bench_eq.F, -0.5, 2.0, 3000,
                       seed=7, s_grid=s)
    pde = ancestral_stats(bench_eq.ctx, bench_eq.F, -0.5, s)
    se = np.sqrt(mc.series.variance[1:] / 3000)
    gap = np.abs(mc.series.mean[1:] - pde.mean[1:])
    assert np.all(gap <= 4.0 * se)
    assert mc.clipped_fraction <= 1e-3


def test_monte_carlo_diffusive_tracks_ou(gauss_eq, gauss_params):
    s = np.array([0.0, 1.0, 2.0])
    mc = monte_carlo_Y_diffusive(gauss_eq.ctx, gauss_eq.F, -0.5, 2.0,
                                 3000, seed=9, s_grid=s)
    mean_ref, var_ref = ou_moments(gauss_params, -0.5, s)
    se = np.sqrt(mc.series.variance[1:] / 3000)
    assert np.all(np.abs(mc.series.mean[1:] - mean_ref[1:]) <= 4.0 * se)


def test_duality_one_triple(bench_eq):
    """E_z[v(s, Y_{t-s}) / F(Y_{t-s})] equals v(t, z)/F(z) for a neutral
    fraction v; single spot check of the backward-forward duality."""
    from lineagelab import evolve_fraction, indicator_fraction

    grid = bench_eq.F.grid
    z, s, t = -0.9, 1.0, 3.0
    v0 = indicator_fraction(bench_eq.F, 0.0, 10.0).v
    v_at = {tau: evolve_fraction(bench_eq.ctx, v0, tau)[-1].v.values
            for tau in (t - s, t)}
    Fv = bench_eq.F.values
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_ts = np.where(Fv > 0, v_at[t - s] / Fv, 0.0)
    mc = monte_carlo_Y(bench_eq.ctx, bench_eq.F, z, s, 2000, seed=5,
                       s_grid=[0.0, s])
    ys = mc.samples[:, -1]
    vals = np.interp(ys, grid.z, ratio_ts)
    j = grid.index_of(z)
    target = v_at[t][j] / Fv[j]
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - target) <= 4.0 * se


def test_degenerate_start_raises(bench_eq):
    with pytest.raises(DegenerateWeight):
        monte_carlo_Y(bench_eq.ctx, bench_eq.F, 2.95, 1.0, 10, seed=1)
    with pytest.raises(DegenerateWeight):
        evolve_forward_density(bench_eq.ctx, bench_eq.F, 2.95, [0.0, 1.0])


def test_s_grid_validation(bench_eq):
    with pytest.raises(ValueError):
        evolve_forward_density(bench_eq.ctx, bench_eq.F, -0.9, [1.0, 0.5])
    with pytest.raises(ValueError):
        evolve_forward_density(bench_eq.ctx, bench_eq.F, -0.9, [-1.0, 1.0])
    with pytest.raises(ValueError):
        monte_carlo_Y(bench_eq.ctx, bench_eq.F, -0.9, 1.0, 10, seed=1,
                      s_grid=[0.0, 2.0])
