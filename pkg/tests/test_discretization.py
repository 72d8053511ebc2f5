"""Discrete operators: stencil, transport, generators, adjoints."""

import math

import numpy as np
import pytest

from lineagelab import (DegenerateWeight, Field, Grid, KernelSpec,
                        ModelParams, SelectionSpec, apply_A,
                        apply_A_diffusive, apply_A_jump_form, apply_L,
                        apply_L_diffusive, apply_L_star,
                        apply_L_star_diffusive, build_stencil, integrate,
                        make_context, positivity_window,
                        solve_equilibrium, upwind_dz)


def test_integrate_known_values():
    grid = Grid(-3.0, 3.0, 601)
    assert integrate(Field(grid, np.ones(grid.n))) == pytest.approx(6.0)
    wide = Grid(-8.0, 8.0, 1601)
    gauss = np.exp(-0.5 * wide.z ** 2) / math.sqrt(2.0 * math.pi)
    assert abs(integrate(Field(wide, gauss)) - 1.0) < 1e-10
    odd = Field(grid, grid.z ** 3)
    assert abs(integrate(odd)) < 1e-12


def test_positivity_window():
    vals = np.array([0.0, 1e-20, 0.5, 1.0, 1e-11, 1e-13])
    win = positivity_window(vals)
    assert win.tolist() == [False, False, True, True, True, False]
    with pytest.raises(DegenerateWeight):
        positivity_window(np.zeros(6))


def test_stencil_mass_and_symmetry():
    grid = Grid(-3.0, 3.0, 1201)
    for kind in ("gaussian", "uniform"):
        params = ModelParams(beta=2.0, mu0=1.0, sigma=0.1, c=0.2,
                             selection=SelectionSpec(),
                             kernel=KernelSpec(kind=kind))
        offsets, weights = build_stencil(params, grid)
        assert abs(weights.sum() - 1.0) < 1e-8
        assert np.array_equal(weights, weights[::-1])
        assert offsets[0] == -offsets[-1]
        second = float(np.sum(weights * (offsets * grid.dz) ** 2))
        assert abs(second - params.sigma ** 2) < 0.02 * params.sigma ** 2


def test_stencil_rejects_unresolved_sigma():
    grid = Grid(-3.0, 3.0, 61)
    params = ModelParams(beta=2.0, mu0=1.0, sigma=0.1, c=0.2,
                         selection=SelectionSpec(), kernel=KernelSpec())
    with pytest.raises(ValueError, match="under-resolved"):
        build_stencil(params, grid)


def test_upwind_direction():
    grid = Grid(-1.0, 1.0, 21)
    g = Field(grid, grid.z ** 2)
    fwd = upwind_dz(g, +1.0).values
    bwd = upwind_dz(g, -1.0).values
    i = 10
    dz = grid.dz
    assert fwd[i] == pytest.approx((g.values[i + 1] - g.values[i]) / dz)
    assert bwd[i] == pytest.approx((g.values[i] - g.values[i - 1]) / dz)


def test_generator_identity_nonlocal(bench_eq):
    """A psi computed by discrete product rules equals L(F psi)/F."""
    eq = bench_eq
    grid = eq.F.grid
    win = positivity_window(eq.F.values)
    for vals in (grid.z.copy(), grid.z ** 2, np.sin(2.0 * grid.z)):
        psi = Field(grid, vals)
        Apsi = apply_A(eq.ctx, eq.F, psi)
        LFpsi = apply_L(eq.ctx, Field(grid, eq.F.values * vals))
        diff = np.abs(Apsi.values[win] - LFpsi.values[win] / eq.F.values[win])
        scale = float(np.max(np.abs(Apsi.values[win])))
        assert diff.max() <= 1e-10 * scale


def test_generator_kills_constants(bench_eq):
    psi = Field(bench_eq.F.grid, np.ones(bench_eq.F.grid.n))
    out = apply_A(bench_eq.ctx, bench_eq.F, psi)
    win = positivity_window(bench_eq.F.values)
    assert np.all(out.values[win] == 0.0)
    assert np.all(np.isnan(out.values[~win]))


def test_jump_form_gap_is_first_order(bench_params):
    """The two A forms differ by the transport factor F_{i+1}/F_i, an
    O(dz) discrepancy that halves under grid refinement."""
    gaps = []
    for n in (601, 1201):
        grid = Grid(-3.0, 3.0, n)
        eq = solve_equilibrium(bench_params, grid)
        psi = Field(grid, np.sin(2.0 * grid.z))
        win = positivity_window(eq.F.values)
        a = apply_A(eq.ctx, eq.F, psi).values
        b = apply_A_jump_form(eq.ctx, eq.F, psi).values
        inner = win.copy()
        inner[np.where(win)[0][-1]] = False
        gaps.append(float(np.max(np.abs(a - b)[inner])))
    assert gaps[1] < 0.7 * gaps[0]
    assert gaps[1] < 0.1


def test_jump_part_maximum_principle(bench_eq):
    """At a strict interior max of psi the jump part of A is <= 0."""
    grid = bench_eq.F.grid
    bump = Field(grid, np.exp(-grid.z ** 2 / 0.08))
    out = apply_A_jump_form(bench_eq.ctx, bench_eq.F, bump)
    i = int(np.argmax(bump.values))
    jump = out.values[i] - bench_eq.ctx.params.c * upwind_dz(bump, +1.0).values[i]
    assert jump <= 0.0


def test_adjoint_is_exact_transpose(bench_eq):
    """Plain-sum pairing <L u, v> = <u, L* v> holds at round-off."""
    grid = bench_eq.F.grid
    u = Field(grid, np.exp(-(grid.z - 0.4) ** 2 / 0.1))
    v = Field(grid, np.exp(-(grid.z + 0.3) ** 2 / 0.2))
    Lu = apply_L(bench_eq.ctx, u)
    Lsv = apply_L_star(bench_eq.ctx, v)
    lhs = float(np.sum(Lu.values * v.values))
    rhs = float(np.sum(u.values * Lsv.values))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_adjoints_coincide_without_transport():
    grid = Grid(-3.0, 3.0, 401)
    params = ModelParams(beta=2.0, mu0=1.0, sigma=0.1, c=0.0,
                         selection=SelectionSpec(), kernel=KernelSpec())
    ctx = make_context(params, grid, mu_bar=1.2)
    v = Field(grid, np.exp(-grid.z ** 2))
    a = apply_L(ctx, v).values
    b = apply_L_star(ctx, v).values
    assert np.array_equal(a, b)


def test_diffusive_operators(gauss_eq):
    eq = gauss_eq
    grid = eq.F.grid
    win = positivity_window(eq.F.values)
    psi = Field(grid, np.sin(2.0 * grid.z))
    Apsi = apply_A_diffusive(eq.ctx, eq.F, psi)
    LFpsi = apply_L_diffusive(eq.ctx, Field(grid, eq.F.values * psi.values))
    diff = np.abs(Apsi.values[win] - LFpsi.values[win] / eq.F.values[win])
    assert diff.max() <= 1e-8 * np.max(np.abs(Apsi.values[win]))

    const = Field(grid, np.ones(grid.n))
    out = apply_A_diffusive(eq.ctx, eq.F, const)
    assert np.all(out.values[win] == 0.0)

    u = Field(grid, np.exp(-(grid.z - 0.4) ** 2 / 0.1))
    v = Field(grid, np.exp(-(grid.z + 0.3) ** 2 / 0.2))
    lhs = float(np.sum(apply_L_diffusive(eq.ctx, u).values * v.values))
    rhs = float(np.sum(u.values * apply_L_star_diffusive(eq.ctx, v).values))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_field_shape_check():
    grid = Grid(-1.0, 1.0, 11)
    with pytest.raises(ValueError):
        Field(grid, np.ones(7))
