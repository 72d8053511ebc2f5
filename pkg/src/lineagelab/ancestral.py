"""The ancestral lineage process Y_s, three independent ways.

Backward time convention: s counts time into the past from the moment a
cell is sampled, so "s large" asks about ever older ancestors.

Routes
  1. semigroup_apply: the expectation semigroup E_z[psi(Y_s)], marched in
     the mass variables u = F theta, for which each explicit step is
     algebraically identical to a primal fraction step.  Duality with
     evolve_fraction therefore holds at round-off when both use the same
     step size.
  2. evolve_forward_density: the law of Y_s itself, marched in the ratio
     variables q = rho / F under the adjoint generator, which is the
     exact matrix transpose of the primal one; probability is conserved
     to the componentwise accuracy of the equilibrium profile.
  3. monte_carlo_Y: a continuous-time jump simulation driven only by F
     and the mutation kernel (no shared discrete operators), which keeps
     it an independent check on the two PDE routes.

The long-time law of Y_s has density F phi / int(F phi), and in the
diffusive quadratic case Y_s is an Ornstein-Uhlenbeck process whose
closed-form moment curves ou_moments returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .discretization import (EPS_F, Field, OperatorContext, apply_L,
                             apply_L_diffusive, apply_L_star,
                             apply_L_star_diffusive, integrate,
                             positivity_window)
from .errors import DegenerateWeight, StabilityViolation, WindowExit
from .fractions import fraction_dt_bound
from .params import ModelParams


@dataclass
class AncestralSeries:
    s: np.ndarray          # backward times, increasing into the past
    mean: np.ndarray
    variance: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    start: float           # initial trait z, Y_0 = z


@dataclass
class AncestralDensity:
    s: float
    rho: Field             # probability density of Y_s, unit trapezoid mass


@dataclass
class MonteCarloResult:
    samples: np.ndarray        # (n_paths, len(s)) positions
    series: AncestralSeries
    clipped_fraction: float    # share of total path time pinned at the window
    clip_events: int


def _mass_weighted_psi(F: Field, psi: Field) -> np.ndarray:
    """u = F psi, with u = 0 wherever F = 0 (psi irrelevant there)."""
    u = F.values * psi.values
    return np.where(F.values > 0, u, 0.0)


def semigroup_apply(ctx: OperatorContext, F: Field, psi: Field, s: float,
                    dt: float | None = None,
                    diffusive: bool = False) -> Field:
    """March the expectation semigroup: returns z -> E_z[psi(Y_s)].

    The generator is the F-conjugation of the primal one, so the march
    runs on u = F psi with the primal operator and divides by F once at
    the end.  Values outside the positivity window of F are NaN.
    """
    if s < 0:
        raise ValueError("backward time s must be nonnegative")
    bound = fraction_dt_bound(ctx, diffusive)
    if dt is None:
        dt = 0.5 * bound if math.isfinite(bound) else max(s, 1e-2)
    elif dt > bound * (1.0 + 1e-12):
        raise StabilityViolation(
            f"dt = {dt:.6g} exceeds the monotone step bound {bound:.6g}")
    grid = ctx.grid
    u = _mass_weighted_psi(F, psi)
    if s > 0:
        steps = max(1, int(math.ceil(s / dt - 1e-12)))
        dt_eff = s / steps
        op = apply_L_diffusive if diffusive else apply_L
        for _ in range(steps):
            u = u + dt_eff * op(ctx, Field(grid, u)).values
    win = positivity_window(F.values)
    out = np.full(grid.n, np.nan)
    out[win] = u[win] / F.values[win]
    return Field(grid, out)


def evolve_forward_density(ctx: OperatorContext, F: Field, z0: float,
                           s_grid, dt: float | None = None,
                           diffusive: bool = False) -> list[AncestralDensity]:
    """Law of Y_s started from z0, at each requested backward time.

    Marches q = rho / F under the adjoint operator (the exact transpose
    of the primal one), then reports rho = F q normalized to unit mass.
    """
    grid = ctx.grid
    j0 = grid.index_of(z0)
    F0 = float(F.values[j0])
    if F0 < EPS_F * float(F.values.max()):
        raise DegenerateWeight(
            f"F({grid.z[j0]:.6g}) = {F0:.3g} is below the positivity floor")
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))
    if np.any(s_grid < 0) or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be nonnegative and increasing")

    bound = fraction_dt_bound(ctx, diffusive)
    if dt is None:
        dt = 0.5 * bound if math.isfinite(bound) else 1e-2
    elif dt > bound * (1.0 + 1e-12):
        raise StabilityViolation(
            f"dt = {dt:.6g} exceeds the monotone step bound {bound:.6g}")

    s_max = float(s_grid[-1])
    steps = max(1, int(math.ceil(s_max / dt - 1e-12))) if s_max > 0 else 0
    dt_eff = s_max / steps if steps else dt
    marks = {}
    for s in s_grid:
        k = int(round(s / dt_eff)) if steps else 0
        marks.setdefault(min(k, steps), float(s))

    q = np.zeros(grid.n)
    q[j0] = (1.0 / grid.dz) / F0
    op = apply_L_star_diffusive if diffusive else apply_L_star

    def snapshot(k):
        rho = F.values * q
        mass = integrate(Field(grid, rho))
        return AncestralDensity(s=marks[k], rho=Field(grid, rho / mass))

    out = []
    if 0 in marks:
        out.append(snapshot(0))
    for k in range(1, steps + 1):
        q = q + dt_eff * op(ctx, Field(grid, q)).values
        if k in marks:
            out.append(snapshot(k))
    return out


def _density_stats(density: AncestralDensity):
    grid = density.rho.grid
    z = grid.z
    rho = density.rho.values
    mean = integrate(Field(grid, z * rho))
    var = integrate(Field(grid, (z - mean) ** 2 * rho))
    cdf = np.concatenate([[0.0], cumulative_trapezoid(rho, z)])
    cdf /= cdf[-1]
    q05, q95 = np.interp([0.05, 0.95], cdf, z)
    return mean, var, q05, q95


def ancestral_stats(ctx: OperatorContext, F: Field, z0: float, s_grid,
                    dt: float | None = None,
                    diffusive: bool = False) -> AncestralSeries:
    """Mean, variance, and 5/95% quantiles of Y_s from the forward density."""
    densities = evolve_forward_density(ctx, F, z0, s_grid, dt=dt,
                                       diffusive=diffusive)
    stats = np.array([_density_stats(d) for d in densities])
    s = np.array([d.s for d in densities])
    return AncestralSeries(s=s, mean=stats[:, 0], variance=stats[:, 1],
                           q05=stats[:, 2], q95=stats[:, 3], start=float(z0))


def y_infinity_density(F: Field, phi: Field) -> Field:
    """Density of the ancestral trait infinitely far in the past: F phi."""
    prod = F.values * phi.values
    mass = integrate(Field(F.grid, prod))
    if not mass > 0:
        raise ValueError("F phi has no mass")
    return Field(F.grid, prod / mass)


def ou_moments(params: ModelParams, z0: float, s):
    """Ornstein-Uhlenbeck moment curves for quadratic selection in the
    diffusive regime: reversion rate sigma sqrt(alpha beta), stationary
    variance (sigma/2) sqrt(beta/alpha), centered at z = 0.

    Returns (mean, variance) arrays over the backward times s.
    """
    if params.selection.kind != "quadratic":
        raise ValueError("closed-form moments require quadratic selection")
    alpha = params.selection.alpha
    s = np.asarray(s, dtype=float)
    rate = params.sigma * math.sqrt(alpha * params.beta)
    v_inf = 0.5 * params.sigma * math.sqrt(params.beta / alpha)
    mean = z0 * np.exp(-rate * s)
    var = v_inf * (1.0 - np.exp(-2.0 * rate * s))
    return mean, var


def _window_bounds(F: Field):
    win = positivity_window(F.values)
    idx = np.where(win)[0]
    return float(F.grid.z[idx[0]]), float(F.grid.z[idx[-1]])


def _interp_F(F_tab: np.ndarray, grid, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of the tabulated profile, zero outside."""
    pos = (x - grid.z_min) / grid.dz
    k = np.floor(pos).astype(np.int64)
    frac = pos - k
    inside = (k >= 0) & (k < grid.n - 1)
    k_safe = np.clip(k, 0, grid.n - 2)
    vals = (1.0 - frac) * F_tab[k_safe] + frac * F_tab[k_safe + 1]
    return np.where(inside, vals, 0.0)


def monte_carlo_Y(ctx: OperatorContext, F: Field, z0: float, s_end: float,
                  n_paths: int, seed: int, s_grid=None,
                  max_clip: float = 1e-3) -> MonteCarloResult:
    """Jump-process simulation of the ancestral lineage.

    From position x the total jump rate is beta sum_j w_j F(x + j dz) /
    F(x) over the mutation stencil; holding times are exponential at the
    rate of the current position, the position drifts at speed c between
    jumps, and a jump lands j dz away with probability proportional to
    w_j F(x + j dz) evaluated where the jump happens.  Because the rate
    field changes as the position drifts, holding segments are capped at
    one grid cell of drift (dz / c) and redrawn, which the memoryless
    property makes exact up to the rate variation across a single cell.
    Paths are confined to the positivity window of F; drift time spent
    pinned at the window edge must stay under ``max_clip`` of the total.
    """
    grid = ctx.grid
    params = ctx.params
    j0 = grid.index_of(z0)
    if float(F.values[j0]) < EPS_F * float(F.values.max()):
        raise DegenerateWeight(f"F({grid.z[j0]:.6g}) below positivity floor")
    if s_grid is None:
        s_grid = np.linspace(0.0, s_end, 21)
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))
    if s_grid[-1] > s_end + 1e-12:
        raise ValueError("s_grid extends past s_end")

    z_lo, z_hi = _window_bounds(F)
    F_tab = F.values
    offs = ctx.offsets.astype(np.int64)
    nz = offs != 0
    offs = offs[nz]
    w = ctx.weights[nz]
    beta, c = params.beta, params.c
    step_dz = offs * grid.dz
    cap = grid.dz / c if c > 0 else math.inf

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = np.full(n_paths, float(grid.z[j0]))
    t = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    samples = np.full((n_paths, s_grid.size), np.nan)
    clipped_time = 0.0
    clip_events = 0

    samples[:, s_grid <= 0.0] = x[0]

    while np.any(alive):
        ia = np.where(alive)[0]
        xa = x[ia]
        # total jump rate at the segment start
        targets = xa[:, None] + step_dz[None, :]
        wmat = w[None, :] * _interp_F(F_tab, grid, targets)
        Fx = _interp_F(F_tab, grid, xa)
        rate = beta * wmat.sum(axis=1) / np.maximum(Fx, 1e-300)
        draw = rng.exponential(1.0, size=ia.size)
        with np.errstate(divide="ignore"):
            tau = np.where(rate > 0, draw / np.maximum(rate, 1e-300), np.inf)

        # advance by the capped holding segment; memorylessness lets the
        # uneventful capped segments end with a fresh draw next round
        fires = tau <= cap
        seg_req = np.minimum(tau, cap)
        t0 = t[ia]
        t1 = np.minimum(t0 + seg_req, s_end)
        seg = t1 - t0
        fires &= t0 + seg_req < s_end

        if c > 0:
            x_new = xa + c * seg
            over = np.maximum(x_new - z_hi, 0.0)
            clipped_time += float(over.sum()) / c
            clip_events += int(np.count_nonzero(over))
            x_new = np.minimum(x_new, z_hi)
        else:
            x_new = xa.copy()

        # record snapshots falling inside this segment
        for k in range(s_grid.size):
            sk = s_grid[k]
            hit = (t0 < sk) & (sk <= t1 + 1e-15)
            if np.any(hit):
                pos = xa[hit] + (c * (sk - t0[hit]) if c > 0 else 0.0)
                samples[ia[hit], k] = np.minimum(pos, z_hi)

        # jump targets sampled from the weights at the post-drift position
        if np.any(fires):
            rows = np.where(fires)[0]
            tj = x_new[rows, None] + step_dz[None, :]
            wj = w[None, :] * _interp_F(F_tab, grid, tj)
            cdf = np.cumsum(wj, axis=1)
            tot = cdf[:, -1]
            ok = tot > 0
            u = rng.random(rows.size) * tot
            pick = np.minimum((cdf < u[:, None]).sum(axis=1), offs.size - 1)
            xj = np.where(ok, x_new[rows] + step_dz[pick], x_new[rows])
            outside = (xj < z_lo) | (xj > z_hi)
            clip_events += int(np.count_nonzero(outside))
            x_new[rows] = np.clip(xj, z_lo, z_hi)

        x[ia] = x_new
        t[ia] = t1
        alive[ia] = t1 < s_end - 1e-15

    clipped_fraction = clipped_time / (n_paths * s_end) if s_end > 0 else 0.0
    if clipped_fraction > max_clip:
        raise WindowExit(
            f"{100 * clipped_fraction:.3f}% of path time clipped at the "
            f"positivity window (limit {100 * max_clip:.3f}%)")
    series = _ensemble_series(samples, s_grid, float(grid.z[j0]))
    return MonteCarloResult(samples=samples, series=series,
                            clipped_fraction=clipped_fraction,
                            clip_events=clip_events)


def monte_carlo_Y_diffusive(ctx: OperatorContext, F: Field, z0: float,
                            s_end: float, n_paths: int, seed: int,
                            s_grid=None, ds: float = 0.01,
                            max_clip: float = 1e-3) -> MonteCarloResult:
    """Euler-Maruyama simulation of the diffusive lineage SDE

        dY = (beta sigma^2 (log F)'(Y) + c) ds + sigma sqrt(beta) dB

    with the logarithmic derivative of F tabulated on the grid.  The
    drift is the conjugation drift 2 D (log F)' + c with D = beta
    sigma^2 / 2, the unique choice whose quadratic-selection specialization
    is the Ornstein-Uhlenbeck process with reversion rate sigma
    sqrt(alpha beta) centered at z = 0 (see ou_moments).
    """
    grid = ctx.grid
    params = ctx.params
    j0 = grid.index_of(z0)
    if float(F.values[j0]) < EPS_F * float(F.values.max()):
        raise DegenerateWeight(f"F({grid.z[j0]:.6g}) below positivity floor")
    if s_grid is None:
        s_grid = np.linspace(0.0, s_end, 21)
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))

    z_lo, z_hi = _window_bounds(F)
    win = positivity_window(F.values)
    logF = np.full(grid.n, -np.inf)
    logF[win] = np.log(F.values[win])
    dlogF = np.zeros(grid.n)
    with np.errstate(invalid="ignore"):
        dlogF[1:-1] = (logF[2:] - logF[:-2]) / (2.0 * grid.dz)
    dlogF[~win] = 0.0
    dlogF = np.nan_to_num(dlogF, nan=0.0, posinf=0.0, neginf=0.0)

    D = 0.5 * params.beta * params.sigma ** 2
    vol = math.sqrt(params.beta) * params.sigma
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    steps = max(1, int(math.ceil(s_end / ds - 1e-12)))
    ds_eff = s_end / steps
    marks = {min(int(round(s / ds_eff)), steps): i
             for i, s in enumerate(s_grid)}

    x = np.full(n_paths, float(grid.z[j0]))
    samples = np.full((n_paths, s_grid.size), np.nan)
    clip_events = 0
    clipped_time = 0.0
    if 0 in marks:
        samples[:, marks[0]] = x
    sq = vol * math.sqrt(ds_eff)
    for k in range(1, steps + 1):
        drift = 2.0 * D * _interp_F(dlogF, grid, x) + params.c
        x = x + drift * ds_eff + sq * rng.standard_normal(n_paths)
        out = (x < z_lo) | (x > z_hi)
        clip_events += int(np.count_nonzero(out))
        clipped_time += float(np.count_nonzero(out)) * ds_eff
        x = np.clip(x, z_lo, z_hi)
        if k in marks:
            samples[:, marks[k]] = x
    clipped_fraction = clipped_time / (n_paths * s_end) if s_end > 0 else 0.0
    if clipped_fraction > max_clip:
        raise WindowExit(
            f"{100 * clipped_fraction:.3f}% of diffusive path time clipped "
            f"(limit {100 * max_clip:.3f}%)")
    series = _ensemble_series(samples, s_grid, float(grid.z[j0]))
    return MonteCarloResult(samples=samples, series=series,
                            clipped_fraction=clipped_fraction,
                            clip_events=clip_events)


def _ensemble_series(samples: np.ndarray, s_grid: np.ndarray,
                     start: float) -> AncestralSeries:
    mean = np.nanmean(samples, axis=0)
    var = np.nanvar(samples, axis=0, ddof=1)
    q05 = np.nanquantile(samples, 0.05, axis=0)
    q95 = np.nanquantile(samples, 0.95, axis=0)
    return AncestralSeries(s=s_grid.copy(), mean=mean, variance=var,
                           q05=q05, q95=q95, start=start)
