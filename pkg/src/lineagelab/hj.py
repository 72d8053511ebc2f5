"""Small-variance limit: Hamiltonian structure and the deterministic lineage flow.

When mutation steps scale like sigma and the optimum moves at speed
c = sigma * c', the log transform U = -sigma log F of the traveling profile
converges, as sigma -> 0, to the solution of the stationary equation

    lam + c' U'(z) + mu(z) = beta + beta H(U'(z)),

where H(p) = int K(h) exp(h p) dh - 1 is the cumulant Hamiltonian of the
standardized mutation kernel.  This module evaluates H and its Legendre
transform L, inverts the stationary equation branchwise to recover U, and
integrates the characteristic flow

    dGamma/ds = c' - beta H'(U'(Gamma(s))),

which is the small-sigma limit of the ancestral trait process started from
Gamma(0).  It also collects the closed-form scales that the limit predicts:
growth rate, dominant trait, standing variance, and coalescence times.

Sign conventions.  With U = -sigma log F the limit U is convex: it is
minimized at the dominant trait z_star, its derivative is increasing, and
U'(0) is the minimizer p0 of p -> beta H(p) - c' p.  (Some treatments work
with +sigma log F and state the mirror-image facts; the convex orientation
is forced here by F being log-concave around its peak.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .discretization import Field, integrate, positivity_window
from .errors import (BranchInversionFailure, DegenerateWeight, NoConvergence,
                     WindowExit)
from .params import SQRT3, Grid, KernelSpec, ModelParams, SelectionSpec


@dataclass(frozen=True)
class HamiltonianModel:
    """Cumulant Hamiltonian H(p) = int K(h) e^{hp} dh - 1 of a mutation kernel.

    kind is "gaussian", "uniform", or "diffusive"; the last is the second
    order reduction H(p) = p^2/2 produced by a Brownian mutation operator.
    All three kinds have closed forms (analytic is True); nodes and weights
    carry a Gauss-Legendre rule so that H can also be evaluated by direct
    quadrature of the kernel, as an independent cross-check route.

    For a standardized kernel: H(0) = 0, H is even and strictly convex,
    dH(0) = 0 and d2H(0) = 1.
    """

    kind: str
    analytic: bool
    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None


def hamiltonian_model(kernel: KernelSpec | str) -> HamiltonianModel:
    """Build the Hamiltonian for a kernel spec, a kernel kind name, or
    the string "diffusive" for the second order reduction."""
    if isinstance(kernel, str):
        if kernel == "diffusive":
            return HamiltonianModel(kind="diffusive", analytic=True)
        kernel = KernelSpec(kind=kernel)
    hw = kernel.support_halfwidth()
    order = 96 if kernel.kind == "gaussian" else 48
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = hw * x
    weights = hw * w * kernel.density(nodes)
    return HamiltonianModel(kind=kernel.kind, analytic=True,
                            nodes=nodes, weights=weights)


def _sinhc_minus_one(x: np.ndarray) -> np.ndarray:
    """sinh(x)/x - 1 without cancellation near x = 0."""
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    x2 = xs * xs
    out[small] = x2 / 6.0 * (1.0 + x2 / 20.0)
    xl = x[~small]
    out[~small] = np.sinh(xl) / xl - 1.0
    return out


def _d_sinhc(x: np.ndarray) -> np.ndarray:
    """d/dx of sinh(x)/x, series-protected near x = 0."""
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    x2 = xs * xs
    out[small] = xs / 3.0 * (1.0 + x2 / 10.0 * (1.0 + x2 / 28.0))
    xl = x[~small]
    out[~small] = np.cosh(xl) / xl - np.sinh(xl) / (xl * xl)
    return out


def _d2_sinhc(x: np.ndarray) -> np.ndarray:
    """Second derivative of sinh(x)/x, series-protected near x = 0."""
    out = np.empty_like(x)
    small = np.abs(x) < 0.05
    xs = x[small]
    x2 = xs * xs
    out[small] = 1.0 / 3.0 + x2 * (0.1 + x2 / 168.0)
    xl = x[~small]
    x3 = xl * xl * xl
    out[~small] = (np.sinh(xl) / xl - 2.0 * np.cosh(xl) / (xl * xl)
                   + 2.0 * np.sinh(xl) / x3)
    return out


def hamiltonian(model: HamiltonianModel, p):
    """H(p).  Scalar in, scalar out; arrays pass through elementwise."""
    scalar = np.ndim(p) == 0
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if not model.analytic:
        out = hamiltonian_quadrature(model, arr)
    elif model.kind == "gaussian":
        out = np.expm1(0.5 * arr * arr)
    elif model.kind == "diffusive":
        out = 0.5 * arr * arr
    else:
        out = _sinhc_minus_one(SQRT3 * arr)
    return float(out[0]) if scalar else out


def d_hamiltonian(model: HamiltonianModel, p):
    """dH/dp, strictly increasing with dH(0) = 0."""
    scalar = np.ndim(p) == 0
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if model.kind == "gaussian":
        out = arr * np.exp(0.5 * arr * arr)
    elif model.kind == "diffusive":
        out = arr.copy()
    else:
        out = SQRT3 * _d_sinhc(SQRT3 * arr)
    return float(out[0]) if scalar else out


def _d2_hamiltonian(model: HamiltonianModel, p):
    scalar = np.ndim(p) == 0
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if model.kind == "gaussian":
        out = (1.0 + arr * arr) * np.exp(0.5 * arr * arr)
    elif model.kind == "diffusive":
        out = np.ones_like(arr)
    else:
        out = 3.0 * _d2_sinhc(SQRT3 * arr)
    return float(out[0]) if scalar else out


def hamiltonian_quadrature(model: HamiltonianModel, p):
    """H(p) by Gauss-Legendre quadrature of the kernel itself.

    Kept separate from the closed forms on purpose: it is the independent
    route used to cross-check them."""
    if model.nodes is None:
        raise ValueError("the diffusive model has no kernel to quadrate")
    scalar = np.ndim(p) == 0
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.exp(np.outer(arr, model.nodes)) @ model.weights - 1.0
    return float(out[0]) if scalar else out


def lagrangian(model: HamiltonianModel, v: float,
               tol: float = 1e-13, max_iter: int = 200) -> tuple[float, float]:
    """Legendre transform L(v) = max_p (p v - H(p)) and its maximizer.

    The maximizer solves dH(p) = v.  dH is strictly increasing and odd,
    so the root is bracketed by doubling and then pinned by Newton steps
    that fall back on bisection whenever they leave the bracket.
    Returns (L(v), p).
    """
    v = float(v)
    if v == 0.0:
        return 0.0, 0.0
    w = abs(v)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if float(d_hamiltonian(model, hi)) >= w:
            break
        lo = hi
        hi *= 2.0
    else:
        raise NoConvergence("could not bracket the Legendre maximizer")
    p = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = float(d_hamiltonian(model, p)) - w
        if abs(f) <= tol * max(1.0, w):
            break
        if math.isfinite(f):
            if f > 0.0:
                hi = p
            else:
                lo = p
        else:
            hi = p
        d2 = float(_d2_hamiltonian(model, p))
        if math.isfinite(f) and math.isfinite(d2) and d2 > 0.0:
            cand = p - f / d2
        else:
            cand = 0.5 * (lo + hi)
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, p):
            p = 0.5 * (lo + hi)
            break
        p = cand
    else:
        raise NoConvergence("Legendre maximizer iteration stalled")
    value = p * w - float(hamiltonian(model, p))
    return value, math.copysign(p, v)


def lambda_hj(model: HamiltonianModel, beta: float, mu0: float,
              c_prime: float) -> float:
    """Limit growth rate beta - mu0 - beta L(c_prime/beta).

    Keeping pace with the moving optimum costs beta L(c'/beta) of growth;
    the remainder is the net rate of the optimally placed trait.
    """
    value, _ = lagrangian(model, c_prime / beta)
    return beta - mu0 - beta * value


def dominant_trait_zstar(model: HamiltonianModel, selection: SelectionSpec,
                         beta: float, c_prime: float) -> float:
    """Trait lag z* <= 0 solving m(z*) = beta L(c_prime/beta).

    The profile trails the moving optimum, so the nonpositive root is the
    relevant one; with this sign -c' sigma / m'(z*) is a positive variance.
    """
    if c_prime < 0:
        raise ValueError("c_prime must be nonnegative")
    value, _ = lagrangian(model, c_prime / beta)
    load = beta * value
    if load == 0.0:
        return 0.0
    hi = 0.0
    lo = -1.0
    for _ in range(200):
        if float(selection.m(lo)) >= load:
            break
        lo *= 2.0
    else:
        raise NoConvergence("selection never reaches the mutation load")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(selection.m(mid)) >= load:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, -lo):
            break
    return 0.5 * (lo + hi)


def variance_approx(model: HamiltonianModel, selection: SelectionSpec,
                    beta: float, sigma: float, c_prime: float,
                    z_star: float | None = None) -> float:
    """Leading-order standing variance of the traveling profile.

    For c' > 0 this is -c' sigma / m'(z*): the width that balancing the
    selection gradient at the lag predicts.  For c' = 0 the balance is
    between mutation and selection curvature at the optimum, sigma / U''(0)
    with U''(0) = sqrt(m''(0) / (beta d2H(0))).
    """
    if c_prime < 0:
        raise ValueError("c_prime must be nonnegative")
    if c_prime == 0.0:
        alpha0 = selection.curvature_at_zero()
        if alpha0 <= 0.0:
            raise ValueError("flat-bottomed selection has no curvature scale")
        curv_u = math.sqrt(alpha0 / (beta * float(_d2_hamiltonian(model, 0.0))))
        return sigma / curv_u
    if z_star is None:
        z_star = dominant_trait_zstar(model, selection, beta, c_prime)
    slope = float(selection.m_prime(z_star))
    if slope >= 0.0:
        raise ValueError("selection slope at z* must be negative")
    return -c_prime * sigma / slope


def variance_quadratic(model: HamiltonianModel, beta: float, sigma: float,
                       c_prime: float, alpha: float = 1.0) -> float:
    """Closed-form standing variance for quadratic selection m = alpha z^2/2.

    Independent of the root-finding route in variance_approx; the two are
    algebraically identical and are compared in tests.  For the diffusive
    model it collapses to sigma sqrt(beta/alpha) at every speed.
    """
    if c_prime == 0.0:
        return sigma * math.sqrt(beta / alpha)
    value, _ = lagrangian(model, c_prime / beta)
    return c_prime * sigma / math.sqrt(2.0 * alpha * beta * value)


def epsilon_scale(beta: float, sigma: float, selection: SelectionSpec) -> float:
    """Weak-selection diagnostic sqrt(sigma^2 beta / m''(0)).

    The closed-form approximations in this module carry O(epsilon) errors.
    Infinite when the selection floor is flat (power cost with q > 2);
    nothing branches on this value, it is only reported.
    """
    alpha0 = selection.curvature_at_zero()
    if alpha0 <= 0.0:
        return math.inf
    return math.sqrt(sigma * sigma * beta / alpha0)


@dataclass(frozen=True)
class HJProfile:
    """Limit shape of the traveling profile as sigma -> 0.

    U is the convex rate function (-sigma log F tends to it), dU its
    derivative on the same grid, z_star the dominant trait where U is
    minimized, and variance_approx the predicted standing variance of F.
    beta is carried along because the lineage flow needs it.
    """

    c_prime: float
    lambda_hj: float
    beta: float
    U: Field
    dU: Field
    z_star: float
    variance_approx: float
    epsilon_scale: float


def _invert_branch(model: HamiltonianModel, beta: float, c_prime: float,
                   t: float, p0: float, guess: float, upper: bool) -> float:
    """Solve beta H(p) - c' p = t on one monotone branch.

    The map is convex in p with minimum at p0; upper selects the branch
    p >= p0 (increasing side), otherwise p <= p0.  guess warm-starts the
    search, typically with the solution at the neighboring grid node.
    """
    def g(q: float) -> float:
        return beta * float(hamiltonian(model, q)) - c_prime * q - t

    sgn = 1.0 if upper else -1.0
    step = max(abs(guess - p0), 1e-3)
    far = p0 + sgn * step
    for _ in range(200):
        if g(far) >= 0.0:
            break
        step *= 2.0
        far = p0 + sgn * step
    else:
        raise NoConvergence("branch inversion could not bracket the root")
    near = p0
    p = guess if (near < guess < far or far < guess < near) else 0.5 * (near + far)
    for _ in range(200):
        val = g(p)
        if abs(val) <= 1e-13 * max(1.0, abs(t), beta):
            return p
        if val > 0.0:
            far = p
        else:
            near = p
        der = beta * float(d_hamiltonian(model, p)) - c_prime
        lo, hi = (near, far) if near < far else (far, near)
        cand = p - val / der if math.isfinite(val) and der != 0.0 else None
        if cand is None or not lo < cand < hi:
            cand = 0.5 * (near + far)
        if hi - lo <= 1e-15 * max(1.0, abs(p)):
            return 0.5 * (near + far)
        p = cand
    raise NoConvergence("branch inversion stalled")


def solve_U_hj(params: ModelParams, grid: Grid,
               model: HamiltonianModel | None = None,
               c_prime: float | None = None) -> HJProfile:
    """Invert the stationary equation for the limit rate function U.

    Pointwise in z the equation reads

        beta H(U'(z)) - c' U'(z) = m(z) - beta L(c'/beta).

    The left side is convex in U' with minimum -beta L(c'/beta) attained at
    p0 where dH(p0) = c'/beta; the right side stays above that minimum and
    touches it exactly at z = 0.  U' therefore follows the lower branch
    (U' <= p0) for z < 0 and the upper branch for z > 0, which makes U'
    increasing and U convex, with U'(z_star) = 0 at the dominant trait.
    U is the integral of U', anchored so that U(z_star) = 0.
    """
    if model is None:
        model = hamiltonian_model(params.kernel)
    beta, mu0 = params.beta, params.mu0
    if c_prime is None:
        c_prime = params.c / params.sigma
    if c_prime < 0:
        raise ValueError("c_prime must be nonnegative")
    lval, p0 = lagrangian(model, c_prime / beta)
    load = beta * lval
    lam = beta - mu0 - load
    z = grid.z
    target = np.asarray(params.selection.m(z), dtype=float) - load
    gmin = beta * float(hamiltonian(model, p0)) - c_prime * p0
    if float(target.min()) < gmin - 1e-9 * max(1.0, abs(gmin)):
        raise BranchInversionFailure(
            "selection dips below the minimum of the Hamiltonian branch")
    target = np.maximum(target, gmin)

    p = np.empty(grid.n)
    i0 = grid.i0
    p[i0] = p0
    prev = p0
    for i in range(i0 + 1, grid.n):
        prev = _invert_branch(model, beta, c_prime, target[i], p0, prev, True)
        p[i] = prev
    prev = p0
    for i in range(i0 - 1, -1, -1):
        prev = _invert_branch(model, beta, c_prime, target[i], p0, prev, False)
        p[i] = prev

    u = cumulative_trapezoid(p, z, initial=0.0)
    z_star = dominant_trait_zstar(model, params.selection, beta, c_prime)
    u -= float(np.interp(z_star, z, u))
    try:
        var = variance_approx(model, params.selection, beta, params.sigma,
                              c_prime, z_star=z_star)
    except ValueError:
        var = math.nan
    return HJProfile(c_prime=c_prime, lambda_hj=lam, beta=beta,
                     U=Field(grid, u), dU=Field(grid, p), z_star=z_star,
                     variance_approx=var,
                     epsilon_scale=epsilon_scale(beta, params.sigma,
                                                 params.selection))


def convexity_defect(g: Field) -> float:
    """Most negative second difference of a sampled profile.

    Nonnegative, up to round-off, exactly when the profile is discretely
    convex; triples touching NaN entries are skipped.  Used as the sign
    check on rate functions, which must come out convex.
    """
    v = g.values
    d2 = v[2:] - 2.0 * v[1:-1] + v[:-2]
    d2 = d2[np.isfinite(d2)]
    if d2.size == 0:
        return math.nan
    return float(d2.min())


def u_from_F(F: Field, sigma: float) -> Field:
    """Rate-function estimate -sigma log F, shifted to vanish at its minimum.

    Entries outside the positivity window of F are NaN: where F carries no
    mass the transform says nothing, and comparisons against a solved
    profile must be restricted to the window anyway.
    """
    w = positivity_window(F.values)
    if not np.any(w):
        raise DegenerateWeight("profile has no positive values")
    u = np.full(F.grid.n, np.nan)
    u[w] = -sigma * np.log(F.values[w])
    u -= np.nanmin(u)
    return Field(F.grid, u)


def gamma_ode(profile: HJProfile, model: HamiltonianModel, z0: float,
              s_end: float, ds: float | None = None):
    """Integrate the limiting lineage flow dG/ds = c' - beta dH(dU(G)).

    dU is interpolated linearly between grid nodes and the trajectory is
    advanced with the classical fourth order Runge-Kutta rule; the default
    step is min(0.01, dz / (2 max |dG/ds|)).  Returns the arrays
    (s, gamma).  Raises WindowExit if the flow leaves the range where dU
    is known (NaN entries of dU are treated as unknown).
    """
    if s_end < 0:
        raise ValueError("s_end must be nonnegative")
    grid = profile.dU.grid
    vals = profile.dU.values
    ok = np.isfinite(vals)
    if not ok.any():
        raise DegenerateWeight("dU has no finite values")
    zv = grid.z[ok]
    pv = vals[ok]
    if not zv[0] <= z0 <= zv[-1]:
        raise WindowExit("start point lies outside the profile window")
    cp, beta = profile.c_prime, profile.beta

    def rhs(x: float) -> float:
        if x < zv[0] or x > zv[-1]:
            raise WindowExit("lineage flow left the profile window")
        return cp - beta * float(d_hamiltonian(model, np.interp(x, zv, pv)))

    if ds is None:
        rates = cp - beta * np.atleast_1d(d_hamiltonian(model, pv))
        rmax = float(np.max(np.abs(rates)))
        ds = 0.01 if rmax == 0.0 else min(0.01, grid.dz / (2.0 * rmax))
    if s_end == 0.0:
        return np.zeros(1), np.full(1, float(z0))
    steps = max(1, math.ceil(s_end / ds))
    ds_eff = s_end / steps
    s = np.linspace(0.0, s_end, steps + 1)
    g = np.empty(steps + 1)
    g[0] = x = float(z0)
    for k in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * ds_eff * k1)
        k3 = rhs(x + 0.5 * ds_eff * k2)
        k4 = rhs(x + ds_eff * k3)
        x = x + ds_eff * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        g[k + 1] = x
    return s, g


def gamma_quadratic_approx(beta: float, c_prime: float,
                           model: HamiltonianModel, z0: float, s,
                           alpha: float = 1.0):
    """Closed-form lineage flow for quadratic selection m = alpha z^2 / 2.

    The flow contracts exponentially at rate sqrt(alpha) c' / (sqrt(2
    beta) sqrt(L)); as c' -> 0 the rate tends to sqrt(alpha beta) (unit
    kernel second moment), which is used at c' = 0 exactly.  For the
    diffusive model the rate equals sqrt(alpha beta) at every speed and
    the formula reproduces the flow exactly.
    """
    s = np.asarray(s, dtype=float)
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if c_prime == 0.0:
        rate = math.sqrt(alpha * beta)
    else:
        value, _ = lagrangian(model, c_prime / beta)
        rate = math.sqrt(alpha) * c_prime \
            / (math.sqrt(2.0 * beta) * math.sqrt(value))
    return z0 * np.exp(-rate * s)


@dataclass(frozen=True)
class CoalescenceScales:
    """Characteristic scales of pair coalescence inside the equilibrium.

    time_general inverts the measured standing variance of F and
    time_diffusive is the closed form 1/(sigma sqrt(beta)); the two
    coincide for quadratic selection with a diffusive kernel and differ
    otherwise, so both are reported.  pair_rate is the population-size
    weighted rate at which two independent draws from the stationary
    ancestor density land on the same individual.
    """

    time_general: float
    time_diffusive: float
    pair_rate: float


def coalescence_scales(F: Field, phi: Field, sigma: float, beta: float,
                       carrying_capacity: float) -> CoalescenceScales:
    """Coalescence scales read off the stationary pair (F, phi).

    pair_rate integrates (F phi)^2 / (N F) over the positivity window:
    F phi is the stationary ancestor density and N F(z) dz the head count
    near trait z.
    """
    if carrying_capacity <= 0:
        raise ValueError("carrying capacity must be positive")
    grid = F.grid
    w = positivity_window(F.values)
    if not np.any(w):
        raise DegenerateWeight("profile has no mass")
    mass = integrate(F)
    z = grid.z
    mean = integrate(Field(grid, z * F.values)) / mass
    var = integrate(Field(grid, (z - mean) ** 2 * F.values)) / mass
    dens = np.where(w, F.values * phi.values, 0.0)
    integrand = np.where(w, dens * dens / np.where(w, F.values, 1.0), 0.0)
    rate = integrate(Field(grid, integrand)) / carrying_capacity
    return CoalescenceScales(time_general=1.0 / var,
                             time_diffusive=1.0 / (sigma * math.sqrt(beta)),
                             pair_rate=rate)
