"""Session fixtures: the handful of expensive solves shared across files.

The benchmark configuration (beta = 2, mu0 = 1, sigma = 0.1, c = 0.2,
quadratic selection with alpha = 2, gaussian kernel) exercises every
nonlocal code path at a realistic operating point; the diffusive
configuration (beta = 1, sigma = 0.1, c = 0.01, alpha = 1, mu0 = 0) has
a closed-form gaussian solution to compare against.
"""

import numpy as np
import pytest

from lineagelab import (Grid, IBMConfig, KernelSpec, ModelParams,
                        SampleSpec, SelectionSpec, run_replicates,
                        solve_dual_phi, solve_equilibrium,
                        solve_equilibrium_diffusive)


def benchmark_params() -> ModelParams:
    return ModelParams(beta=2.0, mu0=1.0, sigma=0.1, c=0.2,
                       selection=SelectionSpec(kind="quadratic", alpha=2.0),
                       kernel=KernelSpec(kind="gaussian"))


def gaussian_case_params() -> ModelParams:
    return ModelParams(beta=1.0, mu0=0.0, sigma=0.1, c=0.01,
                       selection=SelectionSpec(kind="quadratic", alpha=1.0),
                       kernel=KernelSpec(kind="gaussian"))


@pytest.fixture(scope="session")
def bench_params():
    return benchmark_params()


@pytest.fixture(scope="session")
def bench_grid():
    return Grid(z_min=-3.0, z_max=3.0, n=1201)


@pytest.fixture(scope="session")
def bench_eq(bench_params, bench_grid):
    return solve_equilibrium(bench_params, bench_grid)


@pytest.fixture(scope="session")
def bench_dual(bench_eq):
    return solve_dual_phi(bench_eq.ctx, bench_eq.F)


@pytest.fixture(scope="session")
def gauss_params():
    return gaussian_case_params()


@pytest.fixture(scope="session")
def gauss_grid():
    return Grid(z_min=-3.0, z_max=3.0, n=1201)


@pytest.fixture(scope="session")
def gauss_eq(gauss_params, gauss_grid):
    return solve_equilibrium_diffusive(gauss_params, gauss_grid)


@pytest.fixture(scope="session")
def ibm_smoke(bench_params, bench_grid):
    """Reduced-size stochastic run shared by the simulator tests: 10
    replicates of 2000 nominal individuals, long enough past burn-in for
    histograms and genealogies to be meaningful."""
    config = IBMConfig(params=bench_params, carrying_capacity=2000.0,
                       competition_strength=1.0, t_burn=3.0, t_record=9.0,
                       seed=3, replicates=10,
                       sample_spec=SampleSpec(at="dominant", count=25),
                       baseline_mortality="density")
    return run_replicates(config, bench_grid)
