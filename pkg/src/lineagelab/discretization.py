"""Grid fields, the mutation stencil, and the discrete generators.

Conventions fixed here and relied on everywhere else:

* convolution uses zero extension outside the grid;
* the stencil is built symmetric bit for bit (half mirrored onto half),
  so the convolution matrix is exactly its own transpose;
* transport in L is upwinded forward for c > 0 (one sided backward at the
  last node), and its formal adjoint L* uses the backward difference;
* the lineage generator A is the conjugation L(F psi)/F written with
  discrete product rules, so the identity A psi = L(F psi)/F holds at
  round-off wherever F is above the positivity floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import DegenerateWeight
from .params import Grid, ModelParams, eval_mu

#: relative positivity floor: nodes with F < EPS_F * max(F) are outside
#: the window on which weighted quantities may be divided by F.
EPS_F = 1e-12

# Convolutions are evaluated by direct summation, never FFT.  The weight
# functions here span many decades, and an FFT convolution carries an
# absolute error of order eps * max regardless of the local magnitude,
# which wrecks relative accuracy in the tails.  Direct summation of the
# positive summands keeps the error relative to each output value, and the
# grids are small enough that the cost is negligible.


@dataclass
class Field:
    """Values sampled on a Grid. Operator outputs may carry NaN flags
    outside the positivity window; state fields are expected finite."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError("field length does not match grid")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def integrate(g: Field) -> float:
    """Trapezoid integral over the grid."""
    return float(trapezoid(g.values, dx=g.grid.dz))


def positivity_window(values: np.ndarray) -> np.ndarray:
    """Boolean mask of nodes at or above the relative floor."""
    top = float(np.max(values))
    if not top > 0:
        raise DegenerateWeight("weight function has no positive part")
    return values >= EPS_F * top


def build_stencil(params: ModelParams, grid: Grid):
    """Offsets j and weights w_j with B g (i) = sum_j w_j g(i+j).

    w_j = K(j dz / sigma) dz / sigma, renormalized to unit sum, built from
    one half so the array is exactly symmetric.
    """
    dz, sigma = grid.dz, params.sigma
    if sigma < 3.0 * dz:
        raise ValueError(
            f"sigma = {sigma} under-resolved: need sigma >= 3 dz = {3 * dz:.4g}")
    halfwidth = params.kernel.support_halfwidth() * sigma
    j_max = int(math.floor(halfwidth / dz + 1e-12))
    if params.kernel.kind == "gaussian":
        j_max = int(math.ceil(halfwidth / dz))
    offsets = np.arange(-j_max, j_max + 1)
    h_pos = (dz / sigma) * np.arange(1, j_max + 1)
    w_pos = params.kernel.density(h_pos) * (dz / sigma)
    w0 = float(params.kernel.density(0.0)) * (dz / sigma)
    w = np.concatenate([w_pos[::-1], [w0], w_pos])
    w /= w.sum()
    return offsets, w


@dataclass
class OperatorContext:
    """Everything the discrete operators need: parameters, grid, the
    mutation stencil, mu on the grid, and the mean fitness reference
    mu_bar (set to beta - lambda so that L F = 0 holds exactly)."""

    params: ModelParams
    grid: Grid
    mu_bar: float
    offsets: np.ndarray
    weights: np.ndarray
    mu: np.ndarray

    @property
    def j_max(self) -> int:
        return int(self.offsets[-1])


def make_context(params: ModelParams, grid: Grid, mu_bar: float) -> OperatorContext:
    offsets, weights = build_stencil(params, grid)
    mu = np.asarray(eval_mu(params, grid.z), dtype=float)
    return OperatorContext(params, grid, float(mu_bar), offsets, weights, mu)


def _convolve(values: np.ndarray, weights: np.ndarray, j_max: int) -> np.ndarray:
    padded = np.concatenate([np.zeros(j_max), values, np.zeros(j_max)])
    return np.convolve(padded, weights, mode="valid")


def convolve_B(ctx: OperatorContext, g: Field) -> Field:
    """Discrete mutation operator B with zero extension off the grid."""
    return Field(g.grid, _convolve(g.values, ctx.weights, ctx.j_max))


def upwind_dz(g: Field, speed_sign: float) -> Field:
    """One sided difference oriented by the sign of the transport speed.

    speed_sign > 0: forward difference, backward at the last node.
    speed_sign < 0: backward difference, forward at the first node.
    """
    v, dz = g.values, g.grid.dz
    out = np.empty_like(v)
    if speed_sign >= 0:
        out[:-1] = (v[1:] - v[:-1]) / dz
        out[-1] = (v[-1] - v[-2]) / dz
    else:
        out[1:] = (v[1:] - v[:-1]) / dz
        out[0] = (v[1] - v[0]) / dz
    return Field(g.grid, out)


def _dz_forward_zero(v: np.ndarray, dz: float) -> np.ndarray:
    """Forward difference with zero extension beyond the last node."""
    out = np.empty_like(v)
    out[:-1] = (v[1:] - v[:-1]) / dz
    out[-1] = -v[-1] / dz
    return out


def _dz_backward_zero(v: np.ndarray, dz: float) -> np.ndarray:
    """Backward difference with zero extension before the first node."""
    out = np.empty_like(v)
    out[1:] = (v[1:] - v[:-1]) / dz
    out[0] = v[0] / dz
    return out


def apply_L(ctx: OperatorContext, v: Field) -> Field:
    """Mean-reverted growth generator
    L v = beta (B v - v) + c dv/dz - (mu - mu_bar) v.

    The transport is the forward upwind difference with zero extension
    beyond the domain, matching the convolution's boundary treatment.
    With that convention the matrix of L_star is exactly the transpose of
    the matrix of L, and the two differ from the one sided interior
    stencil only in rows where every admissible profile is far below the
    positivity floor.
    """
    p = ctx.params
    Bv = _convolve(v.values, ctx.weights, ctx.j_max)
    out = p.beta * (Bv - v.values) + p.c * _dz_forward_zero(v.values, ctx.grid.dz)
    out -= (ctx.mu - ctx.mu_bar) * v.values
    return Field(v.grid, out)


def apply_L_star(ctx: OperatorContext, v: Field) -> Field:
    """Formal adjoint of L: transport sign and upwind orientation flip.

    Discretely this is the exact matrix transpose of apply_L (symmetric
    convolution stencil, diagonal death term, transposed transport
    bidiagonal), so plain-sum duality pairings hold at round-off.
    """
    p = ctx.params
    Bv = _convolve(v.values, ctx.weights, ctx.j_max)
    out = p.beta * (Bv - v.values) - p.c * _dz_backward_zero(v.values, ctx.grid.dz)
    out -= (ctx.mu - ctx.mu_bar) * v.values
    return Field(v.grid, out)


def apply_A(ctx: OperatorContext, F: Field, psi: Field) -> Field:
    """Lineage generator A psi = L(F psi)/F, F-weighted form.

    Jump part: beta (B(F psi) - psi B F)/F.  Transport: the conjugated
    forward difference c F_{i+1}(psi_{i+1}-psi_i)/(dz F_i).  At the last
    node the zero extension makes the conjugated transport vanish
    identically, matching apply_L's boundary row exactly.  NaN outside
    the positivity window of F.
    """
    win = positivity_window(F.values)
    p = ctx.params
    dz = ctx.grid.dz
    Fv, ps = F.values, psi.values
    BF = _convolve(Fv, ctx.weights, ctx.j_max)
    BFpsi = _convolve(Fv * ps, ctx.weights, ctx.j_max)

    out = np.full_like(Fv, np.nan)
    Fsafe = np.where(win, Fv, 1.0)
    jump = p.beta * (BFpsi - ps * BF) / Fsafe

    trans = np.zeros_like(Fv)
    trans[:-1] = p.c * Fv[1:] * (ps[1:] - ps[:-1]) / (dz * Fsafe[:-1])

    out[win] = (jump + trans)[win]
    return Field(F.grid, out)


def apply_A_jump_form(ctx: OperatorContext, F: Field, psi: Field) -> Field:
    """A written as jump rates plus plain upwind transport.

    Shares the jump part with apply_A exactly; the transport differs by
    the O(dz) factor F_{i+1}/F_i, which is what the cross-check between
    the two forms measures.
    """
    win = positivity_window(F.values)
    p = ctx.params
    Fv, ps = F.values, psi.values
    BF = _convolve(Fv, ctx.weights, ctx.j_max)
    BFpsi = _convolve(Fv * ps, ctx.weights, ctx.j_max)
    Fsafe = np.where(win, Fv, 1.0)
    out = np.full_like(Fv, np.nan)
    vals = p.beta * (BFpsi - ps * BF) / Fsafe + p.c * upwind_dz(psi, +1.0).values
    out[win] = vals[win]
    return Field(F.grid, out)


def _shifted(v: np.ndarray):
    """Zero-extended left and right neighbours."""
    vp = np.empty_like(v)
    vm = np.empty_like(v)
    vp[:-1] = v[1:]
    vp[-1] = 0.0
    vm[1:] = v[:-1]
    vm[0] = 0.0
    return vp, vm


def apply_L_diffusive(ctx: OperatorContext, v: Field) -> Field:
    """Second order expansion of L: (beta sigma^2/2) v'' + c v' - (mu-mu_bar) v.

    Centered differences with zero extension at both ends; the transport
    is centered as well, which keeps the scheme second order (the upwind
    variant's numerical diffusion would swamp small-sigma asymptotics).
    """
    p = ctx.params
    dz = ctx.grid.dz
    vp, vm = _shifted(v.values)
    d2 = (vp - 2.0 * v.values + vm) / (dz * dz)
    d0 = (vp - vm) / (2.0 * dz)
    out = 0.5 * p.beta * p.sigma ** 2 * d2 + p.c * d0
    out -= (ctx.mu - ctx.mu_bar) * v.values
    return Field(v.grid, out)


def apply_L_star_diffusive(ctx: OperatorContext, v: Field) -> Field:
    """Formal adjoint of apply_L_diffusive: the transport sign flips.

    The centered second difference is symmetric and the centered first
    difference is antisymmetric under zero extension, so this is the
    exact matrix transpose of apply_L_diffusive.
    """
    p = ctx.params
    dz = ctx.grid.dz
    vp, vm = _shifted(v.values)
    d2 = (vp - 2.0 * v.values + vm) / (dz * dz)
    d0 = (vp - vm) / (2.0 * dz)
    out = 0.5 * p.beta * p.sigma ** 2 * d2 - p.c * d0
    out -= (ctx.mu - ctx.mu_bar) * v.values
    return Field(v.grid, out)


def apply_A_diffusive(ctx: OperatorContext, F: Field, psi: Field) -> Field:
    """Diffusive lineage generator, exact discrete conjugation of
    apply_L_diffusive:

        A psi = (beta sigma^2/2) psi'' + (beta sigma^2 F'/F + c) psi'

    realized through the discrete product rules

        D2(F psi) = F D2 psi + psi D2 F + D+F D+psi + D-F D-psi
        D0(F psi) = F D0 psi + psi D0 F + (dz/2)(D+F D+psi - D-F D-psi)

    so that A psi = [L_diff(F psi) - psi L_diff F]/F holds at round-off.
    NaN outside the positivity window.
    """
    win = positivity_window(F.values)
    p = ctx.params
    dz = ctx.grid.dz
    Fv, ps = F.values, psi.values
    Fp, Fm = _shifted(Fv)
    pp, pm = _shifted(ps)
    dpF = (Fp - Fv) / dz
    dmF = (Fv - Fm) / dz
    dpP = (pp - ps) / dz
    dmP = (ps - pm) / dz
    d2 = (pp - 2.0 * ps + pm) / (dz * dz)
    d0 = (pp - pm) / (2.0 * dz)
    Fsafe = np.where(win, Fv, 1.0)
    diff = 0.5 * p.beta * p.sigma ** 2 * (d2 + (dpF * dpP + dmF * dmP) / Fsafe)
    trans = p.c * (d0 + 0.5 * dz * (dpF * dpP - dmF * dmP) / Fsafe)
    out = np.full_like(Fv, np.nan)
    out[win] = (diff + trans)[win]
    return Field(F.grid, out)
