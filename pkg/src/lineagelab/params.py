"""Model ingredients: selection functions, mutation kernels, trait grid.

The moving-frame variable is z = x - c t.  All rates are per unit time,
all traits dimensionless.  Mutation kernels are standardized: unit mass,
zero mean, unit second moment in the kernel variable h, with the actual
mutation jump being sigma * h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

SQRT3 = math.sqrt(3.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

#: half-width, in units of h, beyond which a gaussian kernel is truncated
#: when building discrete stencils.  exp(-32) ~ 1.3e-14 of the peak.
GAUSSIAN_CUTOFF = 8.0


@dataclass(frozen=True)
class SelectionSpec:
    """Even convex selection cost m(z) with m(0) = 0.

    kinds:
      quadratic:       m(z) = alpha z^2 / 2, so m''(0) = alpha
      power:           m(z) = |z|^q / q for even q >= 2
      cosh_minus_one:  m(z) = scale^2 (cosh(z/scale) - 1), m''(0) = 1
    """

    kind: str = "quadratic"
    alpha: float = 1.0
    q: int = 4
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "power", "cosh_minus_one"):
            raise ValueError(f"unknown selection kind: {self.kind!r}")
        if self.kind == "quadratic" and not self.alpha > 0:
            raise ValueError("selection alpha must be positive")
        if self.kind == "power":
            if self.q < 2 or self.q % 2 != 0:
                raise ValueError("selection power q must be an even integer >= 2")
        if self.kind == "cosh_minus_one" and not self.scale > 0:
            raise ValueError("selection scale must be positive")

    def m(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * self.alpha * z * z
        if self.kind == "power":
            return np.abs(z) ** self.q / self.q
        s = self.scale
        return s * s * (np.cosh(z / s) - 1.0)

    def m_prime(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "quadratic":
            return self.alpha * z
        if self.kind == "power":
            return np.sign(z) * np.abs(z) ** (self.q - 1)
        return self.scale * np.sinh(z / self.scale)

    def curvature_at_zero(self) -> float:
        """m''(0); zero for the flat-bottomed power costs with q > 2."""
        if self.kind == "quadratic":
            return self.alpha
        if self.kind == "power":
            return 1.0 if self.q == 2 else 0.0
        return 1.0


@dataclass(frozen=True)
class KernelSpec:
    """Standardized mutation kernel K(h): unit mass and unit variance."""

    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown kernel kind: {self.kind!r}")

    def density(self, h):
        h = np.asarray(h, dtype=float)
        if self.kind == "gaussian":
            return INV_SQRT_2PI * np.exp(-0.5 * h * h)
        return np.where(np.abs(h) <= SQRT3, 1.0 / (2.0 * SQRT3), 0.0)

    def support_halfwidth(self) -> float:
        """Where stencils stop: exact for uniform, a safe cutoff for gaussian."""
        return GAUSSIAN_CUTOFF if self.kind == "gaussian" else SQRT3

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        return rng.uniform(-SQRT3, SQRT3, size)


def kernel_density(spec: KernelSpec, h):
    """Density of the standardized kernel at h (vectorized)."""
    return spec.density(h)


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of the trait model.

    A negative frame speed is normalized away: mu is even and the kernel
    symmetric, so the c < 0 problem is the mirror image of the c > 0 one.
    ``reflected`` records that the caller's outputs refer to -z.
    """

    beta: float
    sigma: float
    c: float
    mu0: float = 1.0
    selection: SelectionSpec = field(default_factory=SelectionSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    reflected: bool = False

    def __post_init__(self):
        if self.c < 0:
            object.__setattr__(self, "c", -self.c)
            object.__setattr__(self, "reflected", True)


def eval_mu(params: ModelParams, z):
    """Trait-dependent death rate mu0 + m(z) in the moving frame."""
    return params.mu0 + params.selection.m(z)


@dataclass(frozen=True)
class Grid:
    """Uniform trait grid that contains z = 0 exactly."""

    z_min: float = -3.0
    z_max: float = 3.0
    n: int = 1201

    def __post_init__(self):
        if self.n < 5:
            raise ValueError("grid needs at least 5 points")
        if not (self.z_min < 0.0 < self.z_max):
            raise ValueError("grid must straddle z = 0")
        i0 = -self.z_min / self.dz
        if abs(i0 - round(i0)) > 1e-9:
            raise ValueError("grid spacing must place z = 0 on a node")

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.n - 1)

    @cached_property
    def z(self) -> np.ndarray:
        z = np.linspace(self.z_min, self.z_max, self.n)
        z[self.i0] = 0.0
        z.setflags(write=False)
        return z

    @property
    def i0(self) -> int:
        return round(-self.z_min / self.dz)

    def index_of(self, value: float) -> int:
        """Nearest node index; raises if value falls outside the grid."""
        if not (self.z_min - 0.5 * self.dz <= value <= self.z_max + 0.5 * self.dz):
            raise ValueError(f"value {value} outside grid")
        return int(round((value - self.z_min) / self.dz))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]


def validate(params: ModelParams) -> ValidationReport:
    """Check the standing assumptions and report each one.

    Kernel moments are measured by adaptive quadrature of the continuous
    density, not by grid sums, so the report reflects the model rather
    than any discretization.
    """
    checks = []
    checks.append(CheckResult(
        "beta_exceeds_mu0", params.beta > params.mu0,
        params.beta - params.mu0, "growth requires beta > mu0"))
    checks.append(CheckResult("sigma_positive", params.sigma > 0, params.sigma))
    checks.append(CheckResult("beta_positive", params.beta > 0, params.beta))
    checks.append(CheckResult("mu0_nonnegative", params.mu0 >= 0, params.mu0))

    k = params.kernel
    hw = k.support_halfwidth()
    mass, _ = integrate.quad(lambda h: float(k.density(h)), -hw, hw, limit=200)
    m2, _ = integrate.quad(lambda h: h * h * float(k.density(h)), -hw, hw, limit=200)
    checks.append(CheckResult("kernel_mass", abs(mass - 1.0) <= 1e-8, mass))
    checks.append(CheckResult("kernel_second_moment", abs(m2 - 1.0) <= 1e-8, m2))
    hs = np.linspace(0.1, hw, 23)
    sym = float(np.max(np.abs(k.density(hs) - k.density(-hs))))
    checks.append(CheckResult("kernel_symmetry", sym <= 1e-14, sym))

    sel = params.selection
    zs = np.linspace(0.0, 6.0, 41)
    even = float(np.max(np.abs(sel.m(zs) - sel.m(-zs))))
    checks.append(CheckResult("selection_even", even <= 1e-12, even))
    checks.append(CheckResult("selection_zero_at_origin",
                              abs(float(sel.m(0.0))) <= 1e-14, float(sel.m(0.0))))
    zf = np.linspace(-6.0, 6.0, 241)
    mf = sel.m(zf)
    d2 = mf[2:] - 2.0 * mf[1:-1] + mf[:-2]
    checks.append(CheckResult("selection_convex", float(d2.min()) >= -1e-10,
                              float(d2.min())))
    grow = float(sel.m(50.0))
    checks.append(CheckResult("selection_confining", grow > 10.0, grow,
                              "m must grow without bound"))
    return ValidationReport(tuple(checks))


# ---------------------------------------------------------------------------
# config dictionaries (shared by the CLI and by tests)

class ConfigError(ValueError):
    """Bad or missing configuration key; the message names the key."""


_SELECTION_KEYS = {
    "quadratic": {"alpha"},
    "power": {"q"},
    "cosh_minus_one": {"scale"},
}


def _reject_unknown(d: dict, allowed, where: str):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {where}.{key}")


def params_from_config(cfg: dict) -> ModelParams:
    """Build ModelParams from the ``model`` section of a config dict."""
    _reject_unknown(cfg, {"beta", "mu0", "selection", "kernel", "sigma", "c"},
                    "model")
    for key in ("beta", "sigma", "c"):
        if key not in cfg:
            raise ConfigError(f"missing config key: model.{key}")
    sel_cfg = dict(cfg.get("selection", {"kind": "quadratic"}))
    kind = sel_cfg.pop("kind", None)
    if kind is None:
        raise ConfigError("missing config key: model.selection.kind")
    if kind not in _SELECTION_KEYS:
        raise ConfigError(f"unknown selection kind: {kind!r}")
    _reject_unknown(sel_cfg, _SELECTION_KEYS[kind], "model.selection")
    try:
        selection = SelectionSpec(kind=kind, **sel_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model.selection: {exc}") from exc

    ker_cfg = dict(cfg.get("kernel", {"kind": "gaussian"}))
    kker = ker_cfg.pop("kind", None)
    if kker is None:
        raise ConfigError("missing config key: model.kernel.kind")
    _reject_unknown(ker_cfg, set(), "model.kernel")
    try:
        kernel = KernelSpec(kind=kker)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return ModelParams(beta=float(cfg["beta"]), mu0=float(cfg.get("mu0", 1.0)),
                       sigma=float(cfg["sigma"]), c=float(cfg["c"]),
                       selection=selection, kernel=kernel)


def grid_from_config(cfg: dict) -> Grid:
    _reject_unknown(cfg, {"z_min", "z_max", "n"}, "grid")
    try:
        return Grid(z_min=float(cfg.get("z_min", -3.0)),
                    z_max=float(cfg.get("z_max", 3.0)),
                    n=int(cfg.get("n", 1201)))
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from exc
