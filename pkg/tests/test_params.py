"""Model parameter containers, kernels, grids, and config parsing."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from lineagelab import (ConfigError, Grid, KernelSpec, ModelParams,
                        SelectionSpec, eval_mu, grid_from_config,
                        params_from_config, validate)

import oracles


def test_selection_closed_forms():
    z = np.linspace(-2.0, 2.0, 9)
    quad_sel = SelectionSpec(kind="quadratic", alpha=2.0)
    assert np.allclose(quad_sel.m(z), z * z)
    assert np.allclose(quad_sel.m_prime(z), 2.0 * z)
    assert quad_sel.curvature_at_zero() == 2.0

    power = SelectionSpec(kind="power", q=4)
    assert np.allclose(power.m(z), z ** 4 / 4.0)
    assert np.allclose(power.m_prime(z), z ** 3)
    assert power.curvature_at_zero() == 0.0

    cosh = SelectionSpec(kind="cosh_minus_one", scale=0.5)
    assert np.allclose(cosh.m(z), 0.25 * (np.cosh(2.0 * z) - 1.0))
    assert cosh.curvature_at_zero() == 1.0


def test_selection_validation():
    with pytest.raises(ValueError):
        SelectionSpec(kind="quadratic", alpha=0.0)
    with pytest.raises(ValueError):
        SelectionSpec(kind="power", q=3)
    with pytest.raises(ValueError):
        SelectionSpec(kind="nope")


def test_kernels_are_standardized():
    for kind in ("gaussian", "uniform"):
        ker = KernelSpec(kind=kind)
        hw = ker.support_halfwidth()
        mass, _ = quad(lambda h: float(ker.density(h)), -hw, hw)
        second, _ = quad(lambda h: h * h * float(ker.density(h)), -hw, hw)
        assert abs(mass - 1.0) < 1e-9
        assert abs(second - 1.0) < 1e-9
        rng = np.random.default_rng(5)
        draws = ker.draw(rng, 200000)
        assert abs(draws.mean()) < 0.01
        assert abs(draws.var() - 1.0) < 0.02
    assert KernelSpec(kind="uniform").support_halfwidth() == oracles.SQRT3


def test_grid_geometry():
    grid = Grid(z_min=-2.0, z_max=2.0, n=401)
    assert grid.dz == pytest.approx(0.01)
    assert grid.z[0] == -2.0 and grid.z[-1] == 2.0
    assert grid.z[grid.i0] == 0.0
    assert grid.index_of(0.503) == np.argmin(np.abs(grid.z - 0.503))
    with pytest.raises(ValueError):
        Grid(z_min=1.0, z_max=-1.0, n=11)


def test_eval_mu_adds_baseline():
    params = ModelParams(beta=2.0, mu0=1.0, sigma=0.1, c=0.2,
                         selection=SelectionSpec(kind="quadratic",
                                                 alpha=2.0),
                         kernel=KernelSpec())
    assert eval_mu(params, 0.0) == pytest.approx(1.0)
    assert eval_mu(params, 1.0) == pytest.approx(2.0)


def test_validate_passes_benchmark():
    params = ModelParams(beta=2.0, mu0=1.0, sigma=0.1, c=0.2,
                         selection=SelectionSpec(kind="quadratic",
                                                 alpha=2.0),
                         kernel=KernelSpec())
    report = validate(params)
    assert report.passed
    assert report.failures == []


def test_validate_flags_subcritical_growth():
    params = ModelParams(beta=0.5, mu0=1.0, sigma=0.1, c=0.0,
                         selection=SelectionSpec(), kernel=KernelSpec())
    report = validate(params)
    assert not report.passed
    assert any("beta" in c.name for c in report.failures)


def test_params_from_config_roundtrip():
    cfg = {"beta": 2.0, "mu0": 1.0, "sigma": 0.1, "c": 0.2,
           "selection": {"kind": "quadratic", "alpha": 2.0},
           "kernel": {"kind": "uniform"}}
    params = params_from_config(cfg)
    assert params.beta == 2.0
    assert params.selection.alpha == 2.0
    assert params.kernel.kind == "uniform"


def test_params_from_config_defaults():
    params = params_from_config({"beta": 1.0, "sigma": 0.2, "c": 0.0})
    assert params.mu0 == 1.0
    assert params.selection.kind == "quadratic"
    assert params.kernel.kind == "gaussian"


def test_config_errors_name_the_key():
    with pytest.raises(ConfigError, match="model.beta"):
        params_from_config({"sigma": 0.1, "c": 0.0})
    with pytest.raises(ConfigError, match="model.bogus"):
        params_from_config({"beta": 1.0, "sigma": 0.1, "c": 0.0,
                            "bogus": 3})
    with pytest.raises(ConfigError, match="model.selection.q"):
        params_from_config({"beta": 1.0, "sigma": 0.1, "c": 0.0,
                            "selection": {"kind": "quadratic", "q": 4}})
    with pytest.raises(ConfigError, match="grid.nodes"):
        grid_from_config({"nodes": 55})


def test_grid_from_config_defaults():
    grid = grid_from_config({})
    assert (grid.z_min, grid.z_max, grid.n) == (-3.0, 3.0, 1201)
