"""Command line front end for the laboratory.

Every experiment is a subcommand of a single executable.  A run reads one
JSON config file, applies optional ``--set key=value`` overrides, and
writes CSV/JSON artifacts into the output directory together with a
manifest recording the config hash, the seed, and the files produced.

Determinism contract: the same config bytes, overrides, and seed produce
byte-identical CSVs.  Floats are written with 17 significant digits so
round-tripping them loses nothing.  Every CSV starts with ``# key=value``
comment lines carrying the scalars that shaped the run.

Exit codes: 0 on success, 2 on a validation failure (bad flags, bad or
missing config keys), 3 on a numerical failure (no convergence, unstable
step, degenerate weights).  Failures also leave a machine readable
error.json in the output directory when it is writable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .ancestral import (AncestralSeries, ancestral_stats, monte_carlo_Y,
                        monte_carlo_Y_diffusive, ou_moments,
                        y_infinity_density)
from .discretization import Field, integrate
from .equilibrium import solve_equilibrium, solve_equilibrium_diffusive
from .errors import LineageLabError
from .fractions import (adaptive_horizon, asymptotic_proportion,
                        evolve_dirac_fraction, evolve_fraction,
                        indicator_fraction, solve_dual_phi)
from .hj import (coalescence_scales, epsilon_scale, gamma_ode,
                 gamma_quadratic_approx, hamiltonian_model, solve_U_hj)
from .ibm import (IBMConfig, SampleSpec, alive_lineage_counts,
                  coalescence_times, extract_lineages, lineage_stats,
                  matched_competition, run_replicates, sample_individuals)
from .params import ConfigError, grid_from_config, params_from_config
from .params import eval_mu

SUBCOMMANDS = ("equilibrium", "dual", "fractions", "ancestral", "hj",
               "ibm", "compare")

_TOP_KEYS = {"model", "grid", "solver", "seed", "fractions", "ancestral",
             "hj", "ibm", "compare"}

# 5% and 95% standard normal quantiles, for closed-form oracle bands.
_Z05 = -1.6448536269514722
_Z95 = 1.6448536269514722


def fmt(value) -> str:
    """Fixed textual form of one cell: 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(path: str, scalars: dict, columns, rows) -> None:
    """CSV with a ``# key=value`` comment preamble and fixed formatting."""
    with open(path, "w") as fh:
        for key, value in scalars.items():
            fh.write(f"# {key}={fmt(value)}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(cell) for cell in row) + "\n")


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"bad --set override (need key=value): {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"bad --set override (empty key): {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(cfg: dict, pairs) -> dict:
    """Apply dotted-path overrides after the file parse."""
    out = {}
    for text in pairs:
        key, value = _parse_override(text)
        out[key] = value
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            elif not isinstance(nxt, dict):
                raise ConfigError(f"--set path crosses a scalar: {key}")
            node = nxt
        node[parts[-1]] = value
    return out


def load_config(path: str):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for key in cfg:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key: {key}")
    return cfg, raw


def _section(cfg: dict, name: str, allowed) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name} must be an object")
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {name}.{key}")
    return sec


def _solver(cfg: dict):
    sec = _section(cfg, "solver", {"tol", "max_iter", "diffusive"})
    return (float(sec.get("tol", 1e-8)), int(sec.get("max_iter", 200000)),
            bool(sec.get("diffusive", False)))


def _solve(cfg: dict):
    """Shared front half: params, grid, and the converged equilibrium."""
    params = params_from_config(cfg.get("model", {}))
    grid = grid_from_config(cfg.get("grid", {}))
    tol, max_iter, diffusive = _solver(cfg)
    solver = solve_equilibrium_diffusive if diffusive else solve_equilibrium
    eq = solver(params, grid, tol=tol, max_iter=max_iter)
    return params, grid, eq, tol, diffusive


def _model_scalars(params, grid, tol, diffusive) -> dict:
    sel = params.selection
    sel_par = {"quadratic": sel.alpha, "power": sel.q,
               "cosh_minus_one": sel.scale}[sel.kind]
    return {
        "beta": params.beta, "mu0": params.mu0, "sigma": params.sigma,
        "c": params.c, "selection": sel.kind, "selection_param": sel_par,
        "kernel": params.kernel.kind, "z_min": grid.z_min,
        "z_max": grid.z_max, "n": grid.n, "tol": tol, "diffusive": diffusive,
    }


def _dominant_trait(F: Field) -> float:
    return float(F.grid.z[int(np.argmax(F.values))])


def _resolve_z0(spec, F: Field) -> float:
    if spec == "dominant":
        return _dominant_trait(F)
    try:
        return float(spec)
    except (TypeError, ValueError):
        raise ConfigError(f"z0 must be a number or 'dominant', got {spec!r}")


def cmd_equilibrium(cfg: dict, out: str, seed: int) -> list:
    params, grid, eq, tol, diffusive = _solve(cfg)
    scalars = _model_scalars(params, grid, tol, diffusive)
    scalars.update({
        "lambda": eq.lam, "lambda_mass": eq.lam_mass,
        "lambda_fitness": eq.lam_fitness, "residual": eq.residual,
        "lambda_consistency": eq.lambda_consistency, "extinct": eq.extinct,
        "iterations": eq.iterations, "mass": integrate(eq.F),
        "dominant_trait": _dominant_trait(eq.F),
    })
    mu = eval_mu(params, grid.z)
    path = os.path.join(out, "equilibrium.csv")
    write_csv(path, scalars, ("z", "F", "mu"),
              zip(grid.z, eq.F.values, mu))
    return [path]


def cmd_dual(cfg: dict, out: str, seed: int) -> list:
    params, grid, eq, tol, diffusive = _solve(cfg)
    dual = solve_dual_phi(eq.ctx, eq.F, tol=tol, diffusive=diffusive)
    yinf = y_infinity_density(eq.F, dual.phi)
    mean_yinf = integrate(Field(grid, grid.z * yinf.values))
    scalars = _model_scalars(params, grid, tol, diffusive)
    scalars.update({
        "lambda": eq.lam, "dual_residual": dual.residual,
        "normalization": dual.normalization, "mean_y_infinity": mean_yinf,
    })
    path = os.path.join(out, "dual.csv")
    write_csv(path, scalars, ("z", "F", "phi", "ancestor_density"),
              zip(grid.z, eq.F.values, dual.phi.values, yinf.values))
    return [path]


def cmd_fractions(cfg: dict, out: str, seed: int) -> list:
    params, grid, eq, tol, diffusive = _solve(cfg)
    sec = _section(cfg, "fractions",
                   {"slices", "dynasties", "t_end", "snapshots"})
    dual = solve_dual_phi(eq.ctx, eq.F, tol=tol, diffusive=diffusive)

    z_star = _dominant_trait(eq.F)
    slices = sec.get("slices")
    if slices is None:
        edge = grid.z_max + grid.dz
        slices = [[grid.z_min, z_star], [z_star, edge]]
    starts = []
    for pair in slices:
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            raise ConfigError("fractions.slices entries must be [lo, hi]")
        starts.append(indicator_fraction(eq.F, float(pair[0]),
                                         float(pair[1])))
    dynasties = [float(y) for y in sec.get("dynasties", [])]

    t_end = sec.get("t_end", "adaptive")
    if t_end == "adaptive":
        probe = adaptive_horizon(eq.ctx, eq.F, dual, starts[0].v,
                                 label=starts[0].label, diffusive=diffusive)
        t_end = probe.state.t
    else:
        t_end = float(t_end)
        if t_end <= 0:
            raise ConfigError("fractions.t_end must be positive")
    n_snap = int(sec.get("snapshots", 5))
    if n_snap < 2:
        raise ConfigError("fractions.snapshots must be at least 2")
    times = np.linspace(0.0, t_end, n_snap)

    trajectories = []
    for state in starts:
        trajectories.append(evolve_fraction(
            eq.ctx, state.v, t_end, snapshots=times[1:-1],
            label=state.label, diffusive=diffusive))
    for y in dynasties:
        trajectories.append(evolve_dirac_fraction(
            eq.ctx, eq.F, y, t_end, snapshots=times[1:-1],
            diffusive=diffusive))

    scalars = _model_scalars(params, grid, tol, diffusive)
    scalars.update({"lambda": eq.lam, "t_end": t_end,
                    "dominant_trait": z_star})
    for k, traj in enumerate(trajectories):
        scalars[f"label_{k}"] = traj[0].label
        scalars[f"proportion_{k}"] = asymptotic_proportion(dual, traj[0].v)

    frac_path = os.path.join(out, "fractions.csv")

    def frac_rows():
        for traj in trajectories:
            for state in traj:
                for z, v in zip(grid.z, state.v.values):
                    yield state.t, z, state.label, v

    write_csv(frac_path, scalars, ("t", "z", "label", "value"), frac_rows())

    # Limiting dynasty shares p(y) for every node carrying mass: the
    # single-cell datum at y has pairing integral F(y) phi(y) dz.
    p = eq.F.values * dual.phi.values * grid.dz
    keep = eq.F.values > 0
    prop_path = os.path.join(out, "proportions.csv")
    write_csv(prop_path, {"t_end": t_end, "lambda": eq.lam,
                          "dominant_trait": z_star},
              ("y", "p"), zip(grid.z[keep], p[keep]))
    return [frac_path, prop_path]


def _series_rows(series: AncestralSeries, source: str):
    for k in range(series.s.size):
        yield (series.s[k], series.mean[k], series.variance[k],
               series.q05[k], series.q95[k], source)


def cmd_ancestral(cfg: dict, out: str, seed: int) -> list:
    params, grid, eq, tol, diffusive = _solve(cfg)
    sec = _section(cfg, "ancestral", {"z0", "s_max", "n_points", "mc_paths"})
    z0 = _resolve_z0(sec.get("z0", "dominant"), eq.F)
    s_max = float(sec.get("s_max", 10.0))
    n_points = int(sec.get("n_points", 41))
    mc_paths = int(sec.get("mc_paths", 2000))
    if s_max <= 0 or n_points < 2:
        raise ConfigError("ancestral.s_max and n_points must be positive")
    s_grid = np.linspace(0.0, s_max, n_points)

    pde = ancestral_stats(eq.ctx, eq.F, z0, s_grid, diffusive=diffusive)
    rows = list(_series_rows(pde, "pde"))

    clipped = math.nan
    if mc_paths > 0:
        sim = monte_carlo_Y_diffusive if diffusive else monte_carlo_Y
        mc = sim(eq.ctx, eq.F, z0, s_max, mc_paths, seed, s_grid=s_grid)
        rows.extend(_series_rows(mc.series, "mc"))
        clipped = mc.clipped_fraction
    if params.selection.kind == "quadratic":
        mean, var = ou_moments(params, z0, s_grid)
        sd = np.sqrt(var)
        oracle = AncestralSeries(s=s_grid, mean=mean, variance=var,
                                 q05=mean + _Z05 * sd, q95=mean + _Z95 * sd,
                                 start=z0)
        rows.extend(_series_rows(oracle, "ou_oracle"))

    dual = solve_dual_phi(eq.ctx, eq.F, tol=tol, diffusive=diffusive)
    yinf = y_infinity_density(eq.F, dual.phi)

    scalars = _model_scalars(params, grid, tol, diffusive)
    scalars.update({"lambda": eq.lam, "z0": z0, "s_max": s_max,
                    "mc_paths": mc_paths, "mc_seed": seed,
                    "mc_clipped_fraction": clipped})
    stats_path = os.path.join(out, "ancestral_stats.csv")
    write_csv(stats_path, scalars,
              ("s", "mean", "var", "q05", "q95", "source"), rows)
    yinf_path = os.path.join(out, "yinf.csv")
    write_csv(yinf_path, {"z0": z0, "lambda": eq.lam},
              ("z", "density"), zip(grid.z, yinf.values))
    return [stats_path, yinf_path]


def cmd_hj(cfg: dict, out: str, seed: int) -> list:
    params = params_from_config(cfg.get("model", {}))
    grid = grid_from_config(cfg.get("grid", {}))
    tol, max_iter, diffusive = _solver(cfg)
    sec = _section(cfg, "hj",
                   {"c_prime", "gamma_z0", "s_max", "carrying_capacity"})
    c_prime = sec.get("c_prime")
    c_prime = params.c / params.sigma if c_prime is None else float(c_prime)
    z0 = float(sec.get("gamma_z0", 0.5))
    s_max = float(sec.get("s_max", 3.0))
    capacity = float(sec.get("carrying_capacity", 20000.0))

    model = hamiltonian_model("diffusive" if diffusive else params.kernel)
    profile = solve_U_hj(params, grid, model=model, c_prime=c_prime)

    prof_path = os.path.join(out, "hj_profile.csv")
    scalars = _model_scalars(params, grid, tol, diffusive)
    scalars.update({"c_prime": c_prime, "lambda_hj": profile.lambda_hj,
                    "z_star": profile.z_star})
    write_csv(prof_path, scalars, ("z", "U", "dU"),
              zip(grid.z, profile.U.values, profile.dU.values))

    s_fine, g_fine = gamma_ode(profile, model, z0, s_max)
    s_out = np.linspace(0.0, s_max, 301)
    rows = [(s, g, "ode") for s, g in
            zip(s_out, np.interp(s_out, s_fine, g_fine))]
    sel = params.selection
    if sel.kind == "quadratic":
        approx = gamma_quadratic_approx(params.beta, c_prime, model, z0,
                                        s_out, alpha=sel.alpha)
        rows.extend((s, g, "quad_approx") for s, g in zip(s_out, approx))
    gamma_path = os.path.join(out, "gamma.csv")
    write_csv(gamma_path, {"c_prime": c_prime, "gamma_z0": z0,
                           "s_max": s_max}, ("s", "gamma", "source"), rows)

    solver = solve_equilibrium_diffusive if diffusive else solve_equilibrium
    eq = solver(params, grid, tol=tol, max_iter=max_iter)
    dual = solve_dual_phi(eq.ctx, eq.F, tol=tol, diffusive=diffusive)
    scales = coalescence_scales(eq.F, dual.phi, params.sigma, params.beta,
                                capacity)
    payload = {
        "lambda_hj": profile.lambda_hj,
        "z_star": profile.z_star,
        "variance_approx": profile.variance_approx,
        "T_c_general": scales.time_general,
        "T_c_diffusive": scales.time_diffusive,
        "kingman_rate": scales.pair_rate,
        "epsilon_scale": epsilon_scale(params.beta, params.sigma,
                                       params.selection),
    }
    scalars_path = os.path.join(out, "scalars.json")
    with open(scalars_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [prof_path, gamma_path, scalars_path]


def _ibm_config(cfg: dict, params, seed: int) -> IBMConfig:
    sec = _section(cfg, "ibm",
                   {"carrying_capacity", "competition", "dt", "t_burn",
                    "t_record", "replicates", "sample_at", "sample_count",
                    "baseline_mortality", "stats_points"})
    competition = sec.get("competition", 1.0)
    if competition == "matched":
        competition = matched_competition(params)
    at = sec.get("sample_at", "dominant")
    count = sec.get("sample_count")
    dt = sec.get("dt")
    try:
        return IBMConfig(
            params=params,
            carrying_capacity=float(sec.get("carrying_capacity", 2000.0)),
            competition_strength=float(competition),
            dt=None if dt is None else float(dt),
            t_burn=float(sec.get("t_burn", 10.0)),
            t_record=float(sec.get("t_record", 20.0)),
            seed=seed,
            replicates=int(sec.get("replicates", 4)),
            sample_spec=SampleSpec(at=at,
                                   count=None if count is None
                                   else int(count)),
            baseline_mortality=sec.get("baseline_mortality", "explicit"),
        )
    except ValueError as exc:
        raise ConfigError(f"bad ibm config: {exc}") from exc


def _stats_points(cfg: dict) -> int:
    sec = cfg.get("ibm", {})
    n = int(sec.get("stats_points", 121)) if isinstance(sec, dict) else 121
    if n < 2:
        raise ConfigError("ibm.stats_points must be at least 2")
    return n


def cmd_ibm(cfg: dict, out: str, seed: int) -> list:
    params = params_from_config(cfg.get("model", {}))
    grid = grid_from_config(cfg.get("grid", {}))
    config = _ibm_config(cfg, params, seed)
    n_stats = _stats_points(cfg)
    run = run_replicates(config, grid)

    counts = run.pooled_histogram
    t_sample = run.t_sample
    lineages = []
    t2_rows = []
    lineage_rows = []
    for rep in run.surviving:
        chains = extract_lineages(rep.table, config.sample_spec, t_sample,
                                  params, grid)
        lineages.extend(chains)
        for chain in chains:
            tip = int(chain.ids[0])
            for s, trait in zip(chain.s, chain.traits):
                lineage_rows.append((rep.replicate, tip, s, trait))
        sample = sample_individuals(rep.table, config.sample_spec, t_sample,
                                    params, grid)
        t2 = coalescence_times(rep.table, sample, t_sample)
        t2_rows.extend((rep.replicate, k, v) for k, v in enumerate(t2))

    scalars = _model_scalars(params, grid, 1e-8, False)
    scalars.update({
        "lambda": run.equilibrium.lam,
        "carrying_capacity": config.carrying_capacity,
        "competition_strength": config.competition_strength,
        "baseline_mortality": config.baseline_mortality,
        "dt": run.config.dt, "t_burn": config.t_burn,
        "t_record": config.t_record, "replicates": config.replicates,
        "seed": config.seed, "initial_size": run.initial_size,
        "extinct_count": run.extinct_count, "mean_size": run.mean_size,
        "t_sample": t_sample, "n_lineages": len(lineages),
    })

    hist_path = os.path.join(out, "histogram.csv")
    write_csv(hist_path, scalars, ("z", "count"),
              zip(grid.z, counts.astype(np.int64)))

    lin_path = os.path.join(out, "lineages.csv")
    write_csv(lin_path, scalars, ("replicate", "lineage_id", "s", "trait"),
              lineage_rows)

    s_grid = np.linspace(0.0, t_sample, n_stats)
    stats_path = os.path.join(out, "lineage_stats.csv")
    if lineages:
        stats = lineage_stats(lineages, s_grid)
        alive = alive_lineage_counts(lineages, s_grid)
        stat_rows = zip(s_grid, stats.mean, stats.variance, stats.q05,
                        stats.q95, alive)
    else:
        stat_rows = ()
    write_csv(stats_path, scalars,
              ("s", "mean", "var", "q05", "q95", "n_alive_lineages"),
              stat_rows)

    t2_path = os.path.join(out, "t2.csv")
    finite = np.array([v for _, _, v in t2_rows if math.isfinite(v)])
    t2_scalars = dict(scalars)
    t2_scalars["median_t2"] = (float(np.median(finite)) if finite.size
                               else math.nan)
    t2_scalars["coalesced_pairs"] = int(finite.size)
    t2_scalars["total_pairs"] = len(t2_rows)
    write_csv(t2_path, t2_scalars, ("replicate", "pair_id", "t2"), t2_rows)
    return [hist_path, lin_path, stats_path, t2_path]


def cmd_compare(cfg: dict, out: str, seed: int) -> list:
    """Overlay of every route to the ancestral mean on one time axis."""
    params, grid, eq, tol, diffusive = _solve(cfg)
    sec = _section(cfg, "compare", {"s_max", "n_points"})
    s_max = float(sec.get("s_max", 10.0))
    n_points = int(sec.get("n_points", 51))
    if s_max <= 0 or n_points < 2:
        raise ConfigError("compare.s_max and n_points must be positive")
    s_grid = np.linspace(0.0, s_max, n_points)
    z0 = _dominant_trait(eq.F)

    pde = ancestral_stats(eq.ctx, eq.F, z0, s_grid, diffusive=diffusive)

    # Limit flow on the slow clock: Gamma(sigma s) overlays the ancestral
    # mean at backward time s.
    model = hamiltonian_model("diffusive" if diffusive else params.kernel)
    c_prime = params.c / params.sigma
    profile = solve_U_hj(params, grid, model=model, c_prime=c_prime)
    s_fine, g_fine = gamma_ode(profile, model, z0, params.sigma * s_max)
    gamma = np.interp(params.sigma * s_grid, s_fine, g_fine)

    if params.selection.kind == "quadratic":
        ou_mean, _ = ou_moments(params, z0, s_grid)
    else:
        ou_mean = np.full_like(s_grid, math.nan)

    config = _ibm_config(cfg, params, seed)
    run = run_replicates(config, grid)
    rep_means = []
    for rep in run.surviving:
        chains = extract_lineages(rep.table, config.sample_spec,
                                  run.t_sample, params, grid)
        if chains:
            rep_means.append(lineage_stats(chains, s_grid).mean)
    if rep_means:
        stack = np.vstack(rep_means)
        # backward times beyond the simulated span are all-NaN columns
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ibm_mean = np.nanmean(stack, axis=0)
            ibm_q05 = np.nanquantile(stack, 0.05, axis=0)
            ibm_q95 = np.nanquantile(stack, 0.95, axis=0)
    else:
        ibm_mean = ibm_q05 = ibm_q95 = np.full_like(s_grid, math.nan)

    scalars = _model_scalars(params, grid, tol, diffusive)
    scalars.update({
        "lambda": eq.lam, "z0": z0, "c_prime": c_prime,
        "carrying_capacity": config.carrying_capacity,
        "replicates": config.replicates, "seed": config.seed,
        "extinct_count": run.extinct_count, "t_sample": run.t_sample,
        "surviving_replicates": len(rep_means),
    })
    path = os.path.join(out, "compare.csv")
    write_csv(path, scalars,
              ("s", "pde_mean", "gamma", "ou_mean", "ibm_mean", "ibm_q05",
               "ibm_q95"),
              zip(s_grid, pde.mean, gamma, ou_mean, ibm_mean, ibm_q05,
                  ibm_q95))
    return [path]


_DISPATCH = {
    "equilibrium": cmd_equilibrium,
    "dual": cmd_dual,
    "fractions": cmd_fractions,
    "ancestral": cmd_ancestral,
    "hj": cmd_hj,
    "ibm": cmd_ibm,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lineagelab",
        description="Trait-structured population laboratory: equilibria, "
                    "neutral fractions, ancestral lineages, limit flows, "
                    "and stochastic simulations.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True,
                       help="path to the JSON config file")
        p.add_argument("--out", required=True,
                       help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (default: config seed, else 0)")
        p.add_argument("--set", dest="overrides", action="append",
                       default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. model.beta=2")
    return parser


def _write_error(out: str, kind: str, exc: Exception) -> None:
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "error.json"), "w") as fh:
            json.dump({"error": kind, "type": type(exc).__name__,
                       "message": str(exc)}, fh, indent=2)
            fh.write("\n")
    except OSError:
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    started = time.perf_counter()
    try:
        os.makedirs(out, exist_ok=True)
        cfg, raw = load_config(args.config)
        overrides = apply_overrides(cfg, args.overrides)
        seed = args.seed
        if seed is None:
            seed = int(cfg.get("seed", 0))
        outputs = _DISPATCH[args.subcommand](cfg, out, seed)
    except ConfigError as exc:
        _write_error(out, "validation", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LineageLabError as exc:
        _write_error(out, "numerical", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        _write_error(out, "validation", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2

    manifest = {
        "config_sha256": hashlib.sha256(raw).hexdigest(),
        "subcommand": args.subcommand,
        "seed": seed,
        "overrides": overrides,
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "wall_time_s": round(time.perf_counter() - started, 3),
        "version": __version__,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
