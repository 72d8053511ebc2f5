"""Dual eigenfunction and neutral fraction dynamics.

The dual profile phi is the nonnegative stationary solution of
d_s phi = L* phi, scaled so that the trapezoid pairing integral F phi
equals one.  Neutral fractions are labelled sub-densities v^k marched
under the primal generator L; their labels carry no dynamics, so any
partition of F into fractions keeps summing to F, and each fraction
relaxes to a constant proportion of F.  That limiting proportion is the
pairing integral v0 phi, which the explicit scheme conserves because the
discrete L* is the exact transpose of the discrete L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .discretization import (EPS_F, Field, OperatorContext, _convolve,
                             apply_L, apply_L_diffusive, apply_L_star,
                             apply_L_star_diffusive, integrate)
from .equilibrium import _polish, _tail_sweep
from .errors import DegenerateWeight, NoConvergence, StabilityViolation

_MIN_ITER = 50


@dataclass
class DualSolution:
    phi: Field            # nonnegative dual profile, scaled so int F phi = 1
    residual: float       # sup |L* phi| after scaling
    normalization: float  # trapezoid integral of F phi after scaling


@dataclass
class FractionState:
    t: float
    v: Field
    label: str


@dataclass
class HorizonResult:
    """Adaptive relaxation horizon for one fraction."""

    state: FractionState
    proportion: float              # pairing integral of the initial datum
    times: list = field(default_factory=list)
    defects: list = field(default_factory=list)  # L1 distance to p * F


def solve_dual_phi(ctx: OperatorContext, F: Field, tol: float = 1e-8,
                   max_iter: int = 200000,
                   diffusive: bool = False) -> DualSolution:
    """March d_s phi = L* phi to its stationary profile.

    The spectral shift is known from the primal solve (mu_bar = beta -
    lambda, and the transpose shares the eigenvalue), so the march runs
    with a fixed shift and renormalizes the sup each step.  The same
    inverse-iteration polish and tail sweep as the primal solver then
    push the row residuals to componentwise round-off before the pairing
    normalization integral F phi = 1 is applied.
    """
    params = ctx.params
    grid = ctx.grid
    mu = ctx.mu
    lam = params.beta - ctx.mu_bar
    beta, c = params.beta, params.c
    dz = grid.dz
    n = grid.n
    tol_int = min(tol, 1e-12)

    # reflected primal profile: exact for symmetric grids, a good start
    # otherwise
    g = np.maximum(F.values[::-1].copy(), 0.0)
    if g.max() <= 0:
        g = np.ones(n)
    g /= g.max()

    if diffusive:
        D = 0.5 * beta * params.sigma ** 2
        dt = 0.4 / (beta + float(mu.max()) + 2.0 * D / dz ** 2)
        ab = np.zeros((3, n))
    else:
        j_max = ctx.j_max
        weights = ctx.weights
        dt_c = dz / c if c > 0 else math.inf
        dt = 0.4 * min(dt_c, 1.0 / (beta + float(mu.max())))
        ab = np.zeros((2, n))

    converged = False
    for it in range(1, max_iter + 1):
        if diffusive:
            # transport sign flips relative to the primal implicit matrix
            ab[1, :] = 1.0 + dt * (mu - beta + lam) + 2.0 * dt * D / dz ** 2
            ab[0, 1:] = -dt * (D / dz ** 2 - c / (2.0 * dz))
            ab[2, :-1] = -dt * (D / dz ** 2 + c / (2.0 * dz))
            gn = solve_banded((1, 1), ab, g)
        else:
            Bg = _convolve(g, weights, j_max)
            rhs = g + dt * beta * Bg
            ab[0, :] = 1.0 + dt * (mu + lam) + dt * c / dz
            if c > 0:
                ab[1, :-1] = -dt * c / dz
                gn = solve_banded((1, 0), ab, rhs)
            else:
                gn = rhs / ab[0, :]
        top = float(np.max(gn))
        if not (top > 0 and math.isfinite(top)):
            raise NoConvergence("dual iteration lost positivity")
        gn /= top
        dprof = float(np.max(np.abs(gn - g)))
        g = gn
        if it >= _MIN_ITER and dprof < tol_int:
            converged = True
            break
    if not converged:
        raise NoConvergence(f"dual profile not converged in {max_iter} iterations")

    g, lam_pol = _polish(params, grid, mu, ctx.offsets, ctx.weights, g, lam,
                         diffusive, adjoint=True)
    g = _tail_sweep(params, grid, mu, ctx.offsets, ctx.weights, g, lam_pol,
                    diffusive, adjoint=True)

    scale = integrate(Field(grid, F.values * g))
    if not scale > 0:
        raise NoConvergence("dual pairing integral is not positive")
    phi = Field(grid, g / scale)
    op = apply_L_star_diffusive if diffusive else apply_L_star
    residual = float(np.max(np.abs(op(ctx, phi).values)))
    normalization = integrate(Field(grid, F.values * phi.values))
    return DualSolution(phi=phi, residual=residual, normalization=normalization)


def fraction_dt_bound(ctx: OperatorContext, diffusive: bool = False) -> float:
    """Largest explicit Euler step that keeps the fraction update monotone.

    The update v + dt L v has diagonal weight 1 - dt (beta + c/dz + mu -
    mu_bar) in the nonlocal case (2 D / dz^2 replacing beta + c/dz in the
    diffusive one); the bound keeps that weight nonnegative so positivity
    and the comparison with F are preserved.
    """
    params = ctx.params
    if diffusive:
        D = 0.5 * params.beta * params.sigma ** 2
        worst = float(np.max(2.0 * D / ctx.grid.dz ** 2 + ctx.mu - ctx.mu_bar))
    else:
        worst = float(np.max(params.beta + params.c / ctx.grid.dz
                             + ctx.mu - ctx.mu_bar))
    if worst <= 0:
        return math.inf
    return 1.0 / worst


def evolve_fraction(ctx: OperatorContext, v0: Field, t_end: float,
                    dt: float | None = None, snapshots=None,
                    label: str = "fraction",
                    diffusive: bool = False) -> list[FractionState]:
    """Explicit march of one labelled fraction under L.

    Returns FractionState snapshots at t = 0, at each requested snapshot
    time (rounded to the step grid), and at t_end.
    """
    vals = np.asarray(v0.values, dtype=float)
    if vals.size and float(vals.min()) < -1e-12 * max(float(np.abs(vals).max()), 1.0):
        raise ValueError("fraction initial datum must be nonnegative")
    bound = fraction_dt_bound(ctx, diffusive)
    if dt is None:
        dt = 0.5 * bound if math.isfinite(bound) else max(t_end, 1e-2)
    elif dt > bound * (1.0 + 1e-12):
        raise StabilityViolation(
            f"dt = {dt:.6g} exceeds the monotone step bound {bound:.6g}")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")

    grid = ctx.grid
    if t_end == 0:
        return [FractionState(0.0, Field(grid, vals.copy()), label)]
    steps = max(1, int(math.ceil(t_end / dt - 1e-12)))
    dt_eff = t_end / steps

    marks = {0, steps}
    if snapshots is None:
        snapshots = ()
    for t_req in snapshots:
        k = int(round(float(t_req) / dt_eff))
        marks.add(min(max(k, 0), steps))

    op = apply_L_diffusive if diffusive else apply_L
    v = vals.copy()
    out = []
    if 0 in marks:
        out.append(FractionState(0.0, Field(grid, v.copy()), label))
    for k in range(1, steps + 1):
        v = v + dt_eff * op(ctx, Field(grid, v)).values
        if k in marks:
            out.append(FractionState(k * dt_eff, Field(grid, v.copy()), label))
    return out


def evolve_dirac_fraction(ctx: OperatorContext, F: Field, y: float,
                          t_end: float, dt: float | None = None,
                          snapshots=None,
                          diffusive: bool = False) -> list[FractionState]:
    """Phenotypic dynasty of the trait y.

    The initial datum is the single-cell mass F(y) carried by a unit
    column of height 1/dz at the grid node y, so summing the dynasties
    over every node (times dz) rebuilds F exactly.
    """
    grid = ctx.grid
    j = grid.index_of(y)
    Fy = float(F.values[j])
    if Fy < EPS_F * float(F.values.max()):
        raise DegenerateWeight(
            f"F({grid.z[j]:.6g}) = {Fy:.3g} is below the positivity floor")
    v0 = np.zeros(grid.n)
    v0[j] = Fy / grid.dz
    label = f"dynasty@{grid.z[j]:.6g}"
    return evolve_fraction(ctx, Field(grid, v0), t_end, dt=dt,
                           snapshots=snapshots, label=label,
                           diffusive=diffusive)


def asymptotic_proportion(dual: DualSolution, v0: Field) -> float:
    """Limiting share of the population descending from the datum v0."""
    return integrate(Field(v0.grid, v0.values * dual.phi.values))


def indicator_fraction(F: Field, z_lo: float, z_hi: float,
                       label: str | None = None) -> FractionState:
    """Restriction of F to [z_lo, z_hi) as a labelled fraction at t = 0."""
    mask = (F.grid.z >= z_lo) & (F.grid.z < z_hi)
    vals = np.where(mask, F.values, 0.0)
    if label is None:
        label = f"slice[{z_lo:.6g},{z_hi:.6g})"
    return FractionState(0.0, Field(F.grid, vals), label)


def adaptive_horizon(ctx: OperatorContext, F: Field, dual: DualSolution,
                     v0: Field, dt: float | None = None,
                     t_cap: float = 400.0, rate_floor: float = 0.01,
                     label: str = "fraction",
                     diffusive: bool = False) -> HorizonResult:
    """March a fraction until its L1 defect stops improving.

    The defect is the L1 distance between v(t) and p * F with p the
    pairing proportion of the initial datum.  It is sampled once per unit
    time; the march stops at the first sample whose decrease over the
    previous unit falls under ``rate_floor`` (relative), which lands just
    past the knee of the exponential relaxation without hardcoding a
    spectral gap.
    """
    p = asymptotic_proportion(dual, v0)
    target = p * F.values
    bound = fraction_dt_bound(ctx, diffusive)
    if dt is None:
        dt = 0.5 * bound if math.isfinite(bound) else 1e-2
    elif dt > bound * (1.0 + 1e-12):
        raise StabilityViolation(
            f"dt = {dt:.6g} exceeds the monotone step bound {bound:.6g}")
    block = max(1, int(math.ceil(1.0 / dt)))
    dt_eff = 1.0 / block
    op = apply_L_diffusive if diffusive else apply_L

    grid = ctx.grid
    v = np.asarray(v0.values, dtype=float).copy()
    floor = 1e-14 * integrate(F)

    def defect(u):
        return integrate(Field(grid, np.abs(u - target)))

    times = [0.0]
    defects = [defect(v)]
    t = 0.0
    while t < t_cap - 1e-9:
        for _ in range(block):
            v = v + dt_eff * op(ctx, Field(grid, v)).values
        t += 1.0
        d = defect(v)
        times.append(t)
        defects.append(d)
        prev = defects[-2]
        if d <= floor or (prev > 0 and (prev - d) < rate_floor * prev):
            break
    state = FractionState(t, Field(grid, v), label)
    return HorizonResult(state=state, proportion=p, times=times,
                         defects=defects)
