"""Moving mutation-selection equilibrium (lambda, F).

Both solvers run the same renormalized shifted power iteration: march the
linear growth flow with an adaptive spectral shift, renormalize the mass
each step, and update the shift by the log mass ratio.  The coupled fixed
point solves the discrete eigenproblem exactly, independent of the step
size, so the reported residual is round-off rather than O(dt).

The contract tolerance ``tol`` (default 1e-8) is what the postconditions
promise; internally the iteration drives the updates to
min(tol, 1e-12), which over-delivers and makes downstream stationarity
identities (L F = 0 with mu_bar = beta - lambda) hold at round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .discretization import (Field, OperatorContext, _convolve, apply_L,
                             apply_L_diffusive, build_stencil, integrate)
from .errors import NoConvergence
from .params import Grid, ModelParams, eval_mu

_MIN_ITER = 50


def gaussian_quadratic_oracle(beta: float, sigma: float, c: float):
    """Closed form for quadratic selection m(z) = z^2/2, mu0 = 0,
    diffusive (second order) mutation:

        lambda = beta - c^2/(2 beta sigma^2) - sigma sqrt(beta)/2
        F gaussian with mean -c/(sigma sqrt(beta)), variance sigma sqrt(beta)

    Returns (lambda, mean, variance).
    """
    lam = beta - c * c / (2.0 * beta * sigma * sigma) - 0.5 * sigma * math.sqrt(beta)
    return lam, -c / (sigma * math.sqrt(beta)), sigma * math.sqrt(beta)


def critical_speed_quadratic(beta: float, sigma: float) -> float:
    """Speed at which the oracle lambda crosses zero."""
    return sigma * beta * math.sqrt(2.0) * math.sqrt(1.0 - sigma / (2.0 * math.sqrt(beta)))


@dataclass
class EquilibriumSolution:
    lam: float                 # principal eigenvalue (mass route)
    lam_mass: float            # (beta - mu0) * integral of F, after normalization
    lam_fitness: float         # beta - mean fitness of F (trapezoid route)
    F: Field
    residual: float            # sup |L F| / sup F with mu_bar = beta - lam
    lambda_consistency: float  # |lam_mass - lam_fitness|
    extinct: bool
    iterations: int
    ctx: OperatorContext       # carries mu_bar = beta - lam for the operators


def _initial_guess(params: ModelParams, grid: Grid):
    beta, sigma, c = params.beta, params.sigma, params.c
    var = sigma * math.sqrt(beta)
    mean = -c / (sigma * math.sqrt(beta))
    # keep the seed bump inside the grid: the shifted power iteration
    # converges from any positive profile, but a center far off the grid
    # would underflow the seed to zero.
    width = grid.z_max - grid.z_min
    mean = min(max(mean, grid.z_min + 0.2 * width), grid.z_max - 0.2 * width)
    g = np.exp(-0.5 * (grid.z - mean) ** 2 / var)
    g /= max(g.max(), 1e-300)
    lam0 = beta - params.mu0 - c * c / (2.0 * beta * sigma * sigma) \
        - 0.5 * sigma * math.sqrt(beta)
    return g, lam0


def _banded_L_matrix(params, grid, mu, offsets, weights, diffusive,
                     adjoint=False):
    """Banded matrix of the growth operator beta B + c d/dz - mu, laid out
    exactly like apply_L / apply_L_diffusive (including boundary rows), in
    scipy solve_banded storage.  With adjoint=True, the exact transpose
    (the growth operator behind apply_L_star).  Returns (bandwidth, ab)."""
    n = grid.n
    dz = grid.dz
    beta, c = params.beta, params.c
    if diffusive:
        # growth operator D d2 + c d0 + (beta - mu), zero extension at ends
        D = 0.5 * beta * params.sigma ** 2
        if adjoint:
            c = -c
        b = 1
        ab = np.zeros((3, n))
        ab[1, :] = -2.0 * D / dz ** 2 + beta - mu
        ab[0, 1:] = D / dz ** 2 + c / (2.0 * dz)
        ab[2, :-1] = D / dz ** 2 - c / (2.0 * dz)
        return b, ab
    j_max = int(offsets[-1])
    b = min(max(j_max, 1), n - 1)
    ab = np.zeros((2 * b + 1, n))
    # convolution bands: entry (i, i+j) = beta w_j  ->  ab[b - j, i + j]
    for j, w in zip(offsets, weights):
        j = int(j)
        if abs(j) > b:
            continue
        if j >= 0:
            ab[b - j, j:] = beta * w
        else:
            ab[b - j, :n + j] = beta * w
    # transport: upwind difference with zero extension at the outflow row;
    # the adjoint couples each row to its left neighbour instead.
    ab[b, :] += -mu - c / dz
    if adjoint:
        ab[b + 1, :-1] += c / dz
    else:
        ab[b - 1, 1:] += c / dz
    return b, ab


def _polish(params, grid, mu, offsets, weights, g, lam, diffusive, steps=3,
            adjoint=False):
    """Inverse-iteration refinement against the exact operator matrix.

    The renormalized march leaves an error component whose size relative
    to the local value of F blows up near the positivity-window edge.
    Inverse iteration with the banded operator matrix produces a vector
    whose row residuals are proportional to F componentwise, which is what
    the conjugation identity A psi = L(F psi)/F needs.
    """
    b, ab = _banded_L_matrix(params, grid, mu, offsets, weights, diffusive,
                             adjoint=adjoint)
    for _ in range(steps):
        shifted = ab.copy()
        shifted[b, :] -= lam
        try:
            x = solve_banded((b, b), shifted, g)
        except np.linalg.LinAlgError:
            break
        top = float(np.max(np.abs(x)))
        if not (top > 0 and math.isfinite(top)):
            break
        x = x / top
        if x[int(np.argmax(np.abs(x)))] < 0:
            x = -x
        # Rayleigh update using the same banded matrix
        Ax = _banded_matvec(ab, b, x)
        lam_new = float(np.dot(x, Ax) / np.dot(x, x))
        if not math.isfinite(lam_new):
            break
        g, lam = x, lam_new
    g = np.where(g > 0, g, 0.0)
    return g, lam


def _banded_matvec(ab, b, x):
    n = x.size
    out = np.zeros_like(x)
    for r in range(ab.shape[0]):
        j = b - r  # column offset: entry (i, i+j)
        if j >= 0:
            out[:n - j if j else n] += ab[r, j:] * x[j:]
        else:
            out[-j:] += ab[r, :n + j] * x[:n + j]
    return out


def _tail_sweep(params, grid, mu, offsets, weights, g, lam, diffusive,
                max_sweeps=200, adjoint=False):
    """Componentwise tail refinement by Gauss-Seidel on the eigen rows.

    The banded solve in _polish is backward stable in norm only, so nodes
    many decades below the peak keep an absolute error of order
    eps * max(F), which is a large relative error there.  Each eigen row
    expresses F_i as a sum of positive terms over its neighbours, so
    sweeping those rows (descending, which resolves the downwind transport
    chain exactly) rebuilds the tail to relative round-off given the core.
    The adjoint rows couple to the left neighbour instead, so that sweep
    runs ascending.  Rows with F >= 1e-2 max stay frozen; the banded solve
    already has them at relative round-off.
    """
    g = g.copy()
    n = grid.n
    dz = grid.dz
    beta, c = params.beta, params.c
    cz = c / dz
    top = float(g.max())
    tail = np.where(g < 1e-2 * top)[0]
    if not adjoint:
        tail = tail[::-1]  # descending resolves the downwind chain
    if tail.size == 0:
        return g

    if diffusive:
        D = 0.5 * beta * params.sigma ** 2
        sgn = -1.0 if adjoint else 1.0
        ap = D / dz ** 2 + sgn * 0.5 * cz
        am = D / dz ** 2 - sgn * 0.5 * cz
        denom = lam + mu + 2.0 * D / dz ** 2 - beta
        for _ in range(max_sweeps):
            delta = 0.0
            for i in tail:
                gp = g[i + 1] if i + 1 < n else 0.0
                gm = g[i - 1] if i > 0 else 0.0
                new = (ap * gp + am * gm) / denom[i]
                if new > 0:
                    delta = max(delta, abs(new - g[i]) / new)
                g[i] = new
            if delta < 1e-15:
                break
        return g

    # Every row, the last included, has the zero-extension form, so one
    # recursion covers the whole tail and the sweep is a Gauss-Seidel
    # iteration on a nonsingular M-matrix: stable and positivity preserving.
    j_max = int(offsets[-1])
    w0 = float(weights[j_max])
    denom = lam + mu + cz - beta * w0
    for _ in range(max_sweeps):
        off = beta * (_convolve(g, weights, j_max) - w0 * g)
        delta = 0.0
        for i in tail:
            if adjoint:
                gn = g[i - 1] if i > 0 else 0.0
            else:
                gn = g[i + 1] if i + 1 < n else 0.0
            new = (off[i] + cz * gn) / denom[i]
            if new > 0:
                delta = max(delta, abs(new - g[i]) / new)
            g[i] = new
        if delta < 1e-15:
            break
    return g


def _finish(params, grid, g, lam_hist, iterations, ctx_mu, offsets, weights,
            diffusive):
    """Windowed-mean lambda from the march, then inverse-iteration polish."""
    lam = float(np.mean(lam_hist[int(0.9 * len(lam_hist)):]))
    g, lam = _polish(params, grid, ctx_mu, offsets, weights, g, lam, diffusive)
    g = _tail_sweep(params, grid, ctx_mu, offsets, weights, g, lam, diffusive)
    return _package(params, grid, g, lam, iterations, ctx_mu, diffusive)


def _package(params, grid, g, lam, iterations, ctx_mu, diffusive):
    mass = integrate(Field(grid, g))
    extinct = not lam > 0.0
    if extinct:
        F = Field(grid, g / mass)
    else:
        F = Field(grid, g * (lam / (params.beta - params.mu0)) / mass)
    try:
        offsets, weights = build_stencil(params, grid)
    except ValueError:
        # sigma under-resolved for a nonlocal stencil; a diffusive solution
        # does not need one, so carry the identity stencil as a placeholder.
        offsets, weights = np.array([0]), np.array([1.0])
    ctx = OperatorContext(params, grid, params.beta - lam, offsets, weights, ctx_mu)
    mass_F = integrate(F)
    lam_mass = (params.beta - params.mu0) * mass_F if not extinct else lam
    mean_fitness = integrate(Field(grid, ctx_mu * F.values)) / mass_F
    lam_fitness = params.beta - mean_fitness
    op = apply_L_diffusive if diffusive else apply_L
    resid_field = op(ctx, F)
    residual = float(np.max(np.abs(resid_field.values)) / np.max(F.values))
    return EquilibriumSolution(
        lam=lam, lam_mass=float(lam_mass), lam_fitness=float(lam_fitness),
        F=F, residual=residual,
        lambda_consistency=abs(float(lam_mass) - float(lam_fitness)),
        extinct=extinct, iterations=iterations, ctx=ctx)


def solve_equilibrium(params: ModelParams, grid: Grid,
                      tol: float = 1e-8, max_iter: int = 200000) -> EquilibriumSolution:
    """Nonlocal equilibrium: lambda F = beta B F + c F' - mu F.

    IMEX march: mutation explicit, transport and death implicit through an
    upper bidiagonal M-matrix (forward upwind, zero extension at the top),
    so every iterate stays positive.  Postconditions: residual <= tol and
    |lam_mass - lam_fitness| <= 10 tol.
    """
    offsets, weights = build_stencil(params, grid)
    j_max = int(offsets[-1])
    mu = np.asarray(eval_mu(params, grid.z), dtype=float)
    beta, c = params.beta, params.c
    dz = grid.dz
    n = grid.n

    dt_c = dz / c if c > 0 else math.inf
    dt = 0.4 * min(dt_c, 1.0 / (beta + float(mu.max())))
    tol_int = min(tol, 1e-12)

    g, lam_hat = _initial_guess(params, grid)
    lam_bound = beta + float(mu.max()) + 10.0

    ab = np.zeros((2, n))
    lam_hist = []
    mass = integrate(Field(grid, g))
    for it in range(1, max_iter + 1):
        Bg = _convolve(g, weights, j_max)
        rhs = g + dt * beta * Bg
        ab[1, :] = 1.0 + dt * (mu + lam_hat) + dt * c / dz
        if c > 0:
            ab[0, 1:] = -dt * c / dz
            gn = solve_banded((0, 1), ab, rhs)
        else:
            gn = rhs / ab[1, :]
        mass_new = integrate(Field(grid, gn))
        r = mass_new / mass
        if not (r > 0 and math.isfinite(r)):
            raise NoConvergence("equilibrium iteration lost positivity")
        lam_inst = lam_hat + math.log(r) / dt
        if abs(lam_inst) > lam_bound:
            raise NoConvergence(f"spectral shift diverged: {lam_inst:.3g}")
        gn /= r
        dlam = abs(lam_inst - lam_hat)
        dprof = float(np.max(np.abs(gn - g)) / np.max(g))
        g, lam_hat = gn, lam_inst
        lam_hist.append(lam_inst)
        if it >= _MIN_ITER and dlam < tol_int and dprof < tol_int:
            return _finish(params, grid, g, lam_hist, it, mu,
                           offsets, weights, diffusive=False)
    raise NoConvergence(f"equilibrium not converged in {max_iter} iterations")


def solve_equilibrium_diffusive(params: ModelParams, grid: Grid,
                                tol: float = 1e-8) -> EquilibriumSolution:
    """Second order (diffusive) equilibrium via a fully implicit march.

    Centered transport keeps the scheme second order; that requires the
    cell Peclet number c dz / (beta sigma^2) < 1, which is checked.  Same
    adaptive shift and normalization as the nonlocal solver.
    """
    beta, c, sigma = params.beta, params.c, params.sigma
    dz = grid.dz
    n = grid.n
    D = 0.5 * beta * sigma * sigma
    if c * dz >= beta * sigma * sigma:
        raise ValueError(
            "grid too coarse for centered transport: need dz < beta sigma^2 / c")
    mu = np.asarray(eval_mu(params, grid.z), dtype=float)
    tol_int = min(tol, 1e-12)
    max_iter = 100000

    g, lam_hat = _initial_guess(params, grid)
    dt = 1.0 / max(1.0, beta)
    lam_bound = beta + float(mu.max()) + 10.0

    lam_hist = []
    mass = integrate(Field(grid, g))
    it = 0
    while it < max_iter:
        it += 1
        ab = np.zeros((3, n))
        ab[1, :] = 1.0 + dt * (mu - beta + lam_hat) + 2.0 * dt * D / dz ** 2
        ab[0, 1:] = -dt * (D / dz ** 2 + c / (2.0 * dz))
        ab[2, :-1] = -dt * (D / dz ** 2 - c / (2.0 * dz))
        gn = solve_banded((1, 1), ab, g)
        mass_new = integrate(Field(grid, gn))
        r = mass_new / mass
        if not (r > 0 and math.isfinite(r)) or not np.all(np.isfinite(gn)):
            dt *= 0.5  # shift overshot a higher mode; retry gentler
            if dt < 1e-6:
                raise NoConvergence("diffusive equilibrium step collapsed")
            continue
        lam_inst = lam_hat + math.log(r) / dt
        if abs(lam_inst) > lam_bound:
            raise NoConvergence(f"spectral shift diverged: {lam_inst:.3g}")
        gn /= r
        dlam = abs(lam_inst - lam_hat)
        dprof = float(np.max(np.abs(gn - g)) / np.max(g))
        g, lam_hat = gn, lam_inst
        lam_hist.append(lam_inst)
        if len(lam_hist) >= 30 and dlam < tol_int and dprof < tol_int:
            return _finish(params, grid, g, lam_hist, it, mu,
                           None, None, diffusive=True)
    raise NoConvergence(f"diffusive equilibrium not converged in {max_iter} iterations")
