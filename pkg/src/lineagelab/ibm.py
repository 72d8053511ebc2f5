"""Stochastic individual-based simulator with full lineage records.

The population is a finite set of individuals carrying a heritable trait
in the absolute frame x. Each one reproduces at rate beta and dies at
rate mu(x - c t) + kappa n(t)/N, where N is the carrying capacity and
kappa the competition strength. The simulator uses the fixed-step
approximation of that birth-death process: over one step of length dt
every alive individual draws an exponential birth clock and an
exponential death clock, clocks below dt fire, and an individual
reproduces at most once per step. Offspring inherit the parent trait
plus sigma times a standardized kernel draw.

Two competition strengths are supported. The literal convention uses
kappa = 1 so the per-capita competitive death rate is exactly n(t)/N.
The matched convention uses kappa = beta - mu0, which makes the
stationary population size agree with N times the mass of the
deterministic profile F.

The baseline mortality mu0 can enter the death clock two ways. With
baseline_mortality="explicit" the clock rate is mu0 + m(z) + kappa n/N,
matching the deterministic equation term by term; the stationary size
is then N lambda / kappa, which is a small fraction of N whenever
lambda is small, and such populations sit close to criticality: their
fitness margin per head is lambda itself, so stochastic lag behind the
moving optimum can snowball into extinction. With
baseline_mortality="density" the clock rate is m(z) + kappa n/N and the
density channel carries the baseline: at stationarity kappa n/N equals
mu0 + lambda, so each individual still feels the full mu0 + m + load
death pressure while the population size sits at N (mu0 + lambda) /
kappa, of order N. The trait shape dynamics are identical in the two
conventions (they differ by a trait-independent rate), so histograms,
lineages, and coalescence statistics agree; only the head count and its
stability differ.

Every individual ever created is kept in an append-only table, so
ancestral lineages and pairwise coalescence times can be reconstructed
after the run by walking parent chains backward. Histograms and lineage
trajectories are reported in the moving frame z = x - c t.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .discretization import Field, integrate
from .equilibrium import EquilibriumSolution, solve_equilibrium
from .errors import Extinction, OrphanChain, StabilityViolation
from .params import Grid, ModelParams, eval_mu

# Default target for the per-step event budget: dt (beta + mu_ref) = 0.02
# keeps the chance of a double event per individual per step below 1e-3.
STEP_EVENT_BUDGET = 0.02
# mu_ref is evaluated this far inside the histogram grid's upper edge.
BOUNDARY_MARGIN = 1.0
# Spacing (in time units) between the snapshots used for the two
# stationarity window histograms, a couple of expected lifetimes so
# the snapshots are roughly independent.
WINDOW_SNAPSHOT_SPACING = 1.0


@dataclass(frozen=True)
class Individual:
    """One row of the lineage table.

    Traits are stored in the absolute frame. ``parent_id`` is None for
    founders and ``death_time`` is None while the individual is alive.
    """

    id: int
    trait: float
    parent_id: int | None
    birth_time: float
    death_time: float | None


@dataclass(frozen=True)
class SampleSpec:
    """Which alive individuals to follow backward.

    ``at`` is either the string "dominant" (the mode bin of the final
    moving-frame histogram) or a moving-frame trait value; the sample is
    everyone in that bin plus its two neighbors. ``count`` caps the
    sample size (closest to the bin center first); None keeps all.
    """

    at: str | float = "dominant"
    count: int | None = None

    def __post_init__(self):
        if isinstance(self.at, str):
            if self.at != "dominant":
                raise ValueError(f"sample location must be 'dominant' or a "
                                 f"trait value, got {self.at!r}")
        else:
            object.__setattr__(self, "at", float(self.at))
        if self.count is not None and self.count < 1:
            raise ValueError("sample count must be at least 1")


@dataclass(frozen=True)
class IBMConfig:
    """Run description for the individual-based simulator.

    ``competition_strength`` multiplies n(t)/N in the death rate; 1.0 is
    the literal convention, beta - mu0 matches the deterministic model.
    ``baseline_mortality`` picks where mu0 enters: "explicit" puts it in
    every death clock, "density" lets the competition channel carry it
    (see the module docstring for the stationary sizes each implies).
    ``dt`` may be left None, in which case the harness picks
    0.02 / (beta + mu(z_ref)) with z_ref one unit inside the histogram
    grid's upper edge.
    """

    params: ModelParams
    carrying_capacity: int
    competition_strength: float = 1.0
    dt: float | None = None
    t_burn: float = 10.0
    t_record: float = 20.0
    seed: int = 0
    replicates: int = 1
    sample_spec: SampleSpec = field(default_factory=SampleSpec)
    baseline_mortality: str = "explicit"

    def __post_init__(self):
        if self.carrying_capacity < 100:
            raise ValueError("carrying capacity must be at least 100")
        if not self.competition_strength >= 0:
            raise ValueError("competition strength must be nonnegative")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_burn < 0 or not self.t_record > 0:
            raise ValueError("need t_burn >= 0 and t_record > 0")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if self.baseline_mortality not in ("explicit", "density"):
            raise ValueError("baseline_mortality must be 'explicit' or 'density'")


def matched_competition(params: ModelParams) -> float:
    """Competition strength that reproduces the deterministic mass: with
    kappa = beta - mu0 the stationary size is N lambda / (beta - mu0),
    the carrying capacity times the mass of F."""
    return params.beta - params.mu0


def stationary_size(config: IBMConfig, lam: float) -> float:
    """Population size at which births balance deaths.

    The balance beta = mean death requires kappa n/N = lambda plus,
    in the density baseline convention, mu0; so the stationary head
    count is N lambda / kappa or N (mu0 + lambda) / kappa.
    """
    kappa = config.competition_strength
    if not kappa > 0:
        raise ValueError("no stationary size without competition")
    load = lam if config.baseline_mortality == "explicit" \
        else lam + config.params.mu0
    return config.carrying_capacity * load / kappa


def default_dt(params: ModelParams, grid: Grid) -> float:
    """Fixed step keeping per-individual event probabilities small.

    The death-rate reference is mu evaluated one unit inside the upper
    grid edge, a trait individuals essentially never outlive."""
    z_ref = max(grid.z_max - BOUNDARY_MARGIN, 0.0)
    return STEP_EVENT_BUDGET / (params.beta + float(eval_mu(params, z_ref)))


class LineageTable:
    """Append-only store of every individual ever created.

    The row index is the individual id. Parents always carry a smaller
    id than their children (founders have parent -1), and death times
    stay NaN while the individual is alive, so the table doubles as an
    index from id to entry and can be grown in amortized constant time.
    """

    __slots__ = ("parent", "birth", "death", "trait", "size")

    def __init__(self, capacity: int = 1024):
        capacity = max(int(capacity), 16)
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.birth = np.zeros(capacity)
        self.death = np.full(capacity, np.nan)
        self.trait = np.zeros(capacity)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def _reserve(self, extra: int):
        capacity = self.parent.size
        need = self.size + extra
        if need <= capacity:
            return
        new = max(2 * capacity, need)
        for name in ("parent", "birth", "death", "trait"):
            old = getattr(self, name)
            grown = np.empty(new, dtype=old.dtype)
            grown[:self.size] = old[:self.size]
            if name == "parent":
                grown[self.size:] = -1
            elif name == "death":
                grown[self.size:] = np.nan
            else:
                grown[self.size:] = 0.0
            setattr(self, name, grown)

    def append_many(self, traits, parents, births) -> np.ndarray:
        """Add newborns; returns their ids. Founders use parent -1."""
        traits = np.atleast_1d(np.asarray(traits, dtype=float))
        parents = np.atleast_1d(np.asarray(parents, dtype=np.int64))
        births = np.atleast_1d(np.asarray(births, dtype=float))
        k = traits.size
        if parents.size != k or births.size != k:
            raise ValueError("traits, parents, births must share a length")
        if np.any(parents >= self.size):
            raise ValueError("parent id not yet in the table")
        real = parents >= 0
        if np.any(self.birth[parents[real]] >= births[real]):
            raise ValueError("children must be born after their parents")
        self._reserve(k)
        ids = np.arange(self.size, self.size + k, dtype=np.int64)
        self.parent[ids] = parents
        self.birth[ids] = births
        self.trait[ids] = traits
        self.size += k
        return ids

    def mark_deaths(self, ids, times):
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(self.birth[ids] >= times):
            raise ValueError("death must come after birth")
        if np.any(~np.isnan(self.death[ids])):
            raise ValueError("individual already dead")
        self.death[ids] = times

    def compact(self):
        """Trim the growable storage down to the live rows."""
        for name in ("parent", "birth", "death", "trait"):
            setattr(self, name, getattr(self, name)[:self.size].copy())

    def individual(self, i: int) -> Individual:
        if not 0 <= i < self.size:
            raise IndexError(f"id {i} not in table of size {self.size}")
        parent = int(self.parent[i])
        death = float(self.death[i])
        return Individual(id=int(i), trait=float(self.trait[i]),
                          parent_id=None if parent < 0 else parent,
                          birth_time=float(self.birth[i]),
                          death_time=None if math.isnan(death) else death)

    def alive_at(self, t: float) -> np.ndarray:
        """Ids of individuals born by t and not yet dead at t."""
        born = self.birth[:self.size] <= t
        death = self.death[:self.size]
        alive = np.isnan(death) | (death > t)
        return np.where(born & alive)[0].astype(np.int64)


@dataclass
class PopulationState:
    """Mutable simulation state: the table, the alive ids, and the clock."""

    table: LineageTable
    alive: np.ndarray
    t: float


def initial_population(F: Field, n0: int, rng: np.random.Generator) -> PopulationState:
    """Founders drawn from the profile F by inverse transform sampling.

    At t = 0 the absolute and moving frames coincide, so founder traits
    are moving-frame draws from F normalized to a probability density.
    """
    table = LineageTable(capacity=max(4 * n0, 1024))
    if n0 > 0:
        mass = integrate(F)
        if not mass > 0:
            raise ValueError("profile has no mass to sample from")
        z = F.grid.z
        cdf = np.concatenate([[0.0], cumulative_trapezoid(F.values, z)]) / mass
        traits = np.interp(rng.random(n0), cdf, z)
        table.append_many(traits, np.full(n0, -1, dtype=np.int64),
                          np.zeros(n0))
    alive = np.arange(n0, dtype=np.int64)
    return PopulationState(table=table, alive=alive, t=0.0)


def step_population(state: PopulationState, config: IBMConfig,
                    rng: np.random.Generator) -> PopulationState:
    """Advance the population by one fixed step of length config.dt.

    Every alive individual draws a birth clock ~ Exp(beta) and a death
    clock ~ Exp(mu(x - ct) + kappa n/N) against the population size at
    the start of the step; clocks below dt fire. An individual
    reproduces at most once per step, and a newborn starts drawing
    clocks only from the next step on. The state is updated in place
    and returned. Raises Extinction when the population empties.
    """
    if config.dt is None:
        raise ValueError("config.dt is unresolved; set it or use run_replicates")
    n = state.alive.size
    if n == 0:
        raise Extinction(state.t)
    dt = config.dt
    params = config.params
    x = state.table.trait[state.alive]
    z = x - params.c * state.t
    base = params.mu0 if config.baseline_mortality == "explicit" else 0.0
    death_rate = base + params.selection.m(z) \
        + config.competition_strength * (n / config.carrying_capacity)
    top = params.beta + float(death_rate.max())
    if dt * top >= 0.5:
        raise StabilityViolation(
            f"dt * max event rate = {dt * top:.3g} >= 0.5; "
            f"one event per individual per step is no longer credible")

    if params.beta > 0:
        birth_clock = rng.standard_exponential(n) / params.beta
    else:
        birth_clock = np.full(n, np.inf)
    death_draw = rng.standard_exponential(n)
    death_clock = np.full(n, np.inf)
    lethal = death_rate > 0
    death_clock[lethal] = death_draw[lethal] / death_rate[lethal]

    born = birth_clock < dt
    if born.any():
        parents = state.alive[born]
        kicks = params.sigma * params.kernel.draw(rng, parents.size)
        children = state.table.append_many(
            state.table.trait[parents] + kicks, parents,
            state.t + birth_clock[born])
    else:
        children = np.empty(0, dtype=np.int64)

    died = death_clock < dt
    if died.any():
        state.table.mark_deaths(state.alive[died],
                                state.t + death_clock[died])

    state.alive = np.concatenate([state.alive[~died], children])
    state.t += dt
    if state.alive.size == 0:
        raise Extinction(state.t)
    return state


def histogram_edges(grid: Grid) -> np.ndarray:
    """Bin edges centering one histogram cell on each grid node."""
    half = 0.5 * grid.dz
    return np.linspace(grid.z_min - half, grid.z_max + half, grid.n + 1)


def histogram_density(counts, grid: Grid) -> Field:
    """Counts per cell turned into a unit-mass density on the grid."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if not total > 0:
        raise ValueError("histogram is empty")
    return Field(grid, counts / (total * grid.dz))


def histogram_profile_distance(counts, F: Field) -> float:
    """L1 distance between the normalized histogram and normalized F."""
    dens = histogram_density(counts, F.grid)
    target = F.values / integrate(F)
    return float(np.sum(np.abs(dens.values - target)) * F.grid.dz)


@dataclass
class ReplicateResult:
    """Everything one replicate produces.

    ``histogram`` accumulates moving-frame counts at every recorded
    step; ``window_histograms`` holds two sparser snapshot histograms
    over the first and second halves of the record window, spaced by
    roughly one lifetime for stationarity checks. ``mean_size`` is the
    time average of the alive count over the record window.
    """

    replicate: int
    table: LineageTable
    alive: np.ndarray
    t_final: float
    histogram: np.ndarray
    window_histograms: np.ndarray
    mean_size: float
    extinct: bool
    extinction_time: float


@dataclass
class IBMResult:
    """Reduction over replicates, plus the shared deterministic inputs."""

    grid: Grid
    config: IBMConfig
    equilibrium: EquilibriumSolution
    initial_size: int
    replicates: list[ReplicateResult]
    extinct_count: int
    mean_size: float
    t_sample: float

    @property
    def surviving(self) -> list[ReplicateResult]:
        return [r for r in self.replicates if not r.extinct]

    @property
    def pooled_histogram(self) -> np.ndarray:
        out = np.zeros(self.grid.n)
        for r in self.surviving:
            out += r.histogram
        return out


def _run_one(config: IBMConfig, grid: Grid, F: Field, n0: int, rep: int,
             steps_burn: int, steps_record: int,
             snap_every: int) -> ReplicateResult:
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, rep)))
    state = initial_population(F, n0, rng)
    edges = histogram_edges(grid)
    hist = np.zeros(grid.n)
    windows = np.zeros((2, grid.n))
    size_sum = 0.0
    recorded = 0
    try:
        for _ in range(steps_burn):
            step_population(state, config, rng)
        for k in range(steps_record):
            step_population(state, config, rng)
            z = state.table.trait[state.alive] - config.params.c * state.t
            counts = np.histogram(z, bins=edges)[0]
            hist += counts
            if (k + 1) % snap_every == 0:
                windows[0 if k < steps_record // 2 else 1] += counts
            size_sum += state.alive.size
            recorded += 1
    except Extinction as failure:
        state.table.compact()
        return ReplicateResult(
            replicate=rep, table=state.table,
            alive=np.empty(0, dtype=np.int64), t_final=failure.t,
            histogram=hist, window_histograms=windows,
            mean_size=size_sum / recorded if recorded else math.nan,
            extinct=True, extinction_time=failure.t)
    state.table.compact()
    return ReplicateResult(
        replicate=rep, table=state.table, alive=state.alive,
        t_final=state.t, histogram=hist, window_histograms=windows,
        mean_size=size_sum / recorded, extinct=False,
        extinction_time=math.nan)


def _thread_count(replicates: int) -> int:
    raw = os.environ.get("LINEAGELAB_THREADS", "")
    if raw.strip():
        return max(1, min(int(raw), replicates))
    return max(1, min(os.cpu_count() or 1, replicates))


def run_replicates(config: IBMConfig, grid: Grid | None = None) -> IBMResult:
    """Solve F once, then run the configured replicates to t_burn + t_record.

    Each replicate owns an independent RNG seeded from (seed, replicate
    index), its own population, and its own lineage table, so results
    are bit-identical for equal configs regardless of thread count.
    Replicates run on a thread pool capped by LINEAGELAB_THREADS.
    Extinct replicates are kept, flagged, and excluded from the pooled
    averages. Founders are drawn from the solved profile at the
    stationary size for the configured conventions.
    """
    if grid is None:
        grid = Grid()
    params = config.params
    eq = solve_equilibrium(params, grid)
    dt = config.dt if config.dt is not None else default_dt(params, grid)
    resolved = replace(config, dt=dt)
    if config.competition_strength > 0:
        n0 = max(int(round(stationary_size(config, eq.lam))), 0)
    else:
        n0 = config.carrying_capacity
    steps_burn = int(round(config.t_burn / dt))
    steps_record = max(1, int(round(config.t_record / dt)))
    snap_every = max(1, int(round(WINDOW_SNAPSHOT_SPACING / dt)))
    t_final = (steps_burn + steps_record) * dt

    jobs = [(resolved, grid, eq.F, n0, rep, steps_burn, steps_record,
             snap_every) for rep in range(config.replicates)]
    workers = _thread_count(config.replicates)
    if workers == 1:
        results = [_run_one(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _run_one(*job), jobs))

    alive_means = [r.mean_size for r in results if not r.extinct]
    return IBMResult(
        grid=grid, config=resolved, equilibrium=eq, initial_size=n0,
        replicates=results,
        extinct_count=sum(r.extinct for r in results),
        mean_size=float(np.mean(alive_means)) if alive_means else math.nan,
        t_sample=t_final)


@dataclass
class Lineage:
    """Backward trait path of one sampled individual.

    ``ids`` lists the ancestors from the sample back to its founder.
    ``s`` holds the backward knot times s_k = t_sample - birth of
    ancestor k, strictly increasing into the past, and ``traits[k]``
    is ancestor k's moving-frame trait at its own birth. The heritable
    trait is piecewise constant in s, one segment per ancestor; seen
    from the moving frame a segment's value slides at the frame speed,
    so evaluation at backward time s on segment k returns
    traits[k] + c (s - s[k]). Without that frame correction the path
    would lag the ancestral process by c times the segment age.
    """

    ids: np.ndarray
    s: np.ndarray
    traits: np.ndarray
    c: float

    def evaluate(self, s_grid) -> np.ndarray:
        """Moving-frame path values at backward times; NaN past the founder."""
        s_grid = np.asarray(s_grid, dtype=float)
        idx = np.searchsorted(self.s, s_grid, side="left")
        inside = idx < self.s.size
        idx = np.minimum(idx, self.s.size - 1)
        out = self.traits[idx] + self.c * (s_grid - self.s[idx])
        return np.where(inside, out, np.nan)


def _chain_of(table: LineageTable, start: int) -> np.ndarray:
    ids = [start]
    seen = 0
    current = start
    while True:
        parent = int(table.parent[current])
        if parent < 0:
            break
        if parent >= current or parent >= table.size:
            raise OrphanChain(f"parent {parent} of {current} is invalid")
        seen += 1
        if seen > table.size:
            raise OrphanChain("parent chain does not terminate")
        ids.append(parent)
        current = parent
    return np.asarray(ids, dtype=np.int64)


def sample_individuals(table: LineageTable, sample_spec: SampleSpec,
                       t_sample: float, params: ModelParams,
                       grid: Grid) -> np.ndarray:
    """Ids of alive individuals in the requested moving-frame bin.

    The bin is the histogram mode for "dominant" sampling, otherwise
    the cell nearest the requested trait; both extend one cell to each
    side. With a count cap, ids closest to the bin center win.
    """
    alive = table.alive_at(t_sample)
    if alive.size == 0:
        return alive
    z = table.trait[alive] - params.c * t_sample
    counts = np.histogram(z, bins=histogram_edges(grid))[0]
    if sample_spec.at == "dominant":
        b = int(np.argmax(counts))
    else:
        b = grid.index_of(float(sample_spec.at))
    center = grid.z[b]
    half = 1.5 * grid.dz
    inside = np.abs(z - center) <= half
    chosen = alive[inside]
    if sample_spec.count is not None and chosen.size > sample_spec.count:
        order = np.lexsort((chosen, np.abs(z[inside] - center)))
        chosen = chosen[order[:sample_spec.count]]
    return np.sort(chosen)


def extract_lineages(table: LineageTable, sample_spec: SampleSpec,
                     t_sample: float, params: ModelParams,
                     grid: Grid) -> list[Lineage]:
    """Backward trait paths for the sampled ids.

    Walks parent chains from each sampled individual to its founder and
    converts birth times to backward times s = t_sample - birth. The
    knots strictly increase because every child is born after its
    parent. A founder sampled directly yields a single-segment path.
    """
    sampled = sample_individuals(table, sample_spec, t_sample, params, grid)
    out = []
    for i in sampled:
        ids = _chain_of(table, int(i))
        births = table.birth[ids]
        if np.any(np.diff(births) >= 0):
            raise OrphanChain("birth times do not decrease along the chain")
        out.append(Lineage(ids=ids, s=t_sample - births,
                           traits=table.trait[ids] - params.c * births,
                           c=params.c))
    return out


def alive_lineage_counts(lineages: list[Lineage], s_grid) -> np.ndarray:
    """How many lineage paths are defined at each backward time."""
    s_grid = np.asarray(s_grid, dtype=float)
    counts = np.zeros(s_grid.size, dtype=np.int64)
    for lineage in lineages:
        counts += s_grid <= lineage.s[-1]
    return counts


def lineage_stats(lineages: list[Lineage], s_grid):
    """Pooled mean, variance, and 5/95% quantiles of the lineage paths.

    Paths shorter than a requested backward time simply drop out of the
    statistics there. The result reuses the ancestral series container,
    so it lines up column for column with the deterministic curves.
    """
    from .ancestral import AncestralSeries

    if not lineages:
        raise ValueError("no lineages to summarize")
    s_grid = np.asarray(s_grid, dtype=float)
    paths = np.vstack([lineage.evaluate(s_grid) for lineage in lineages])
    defined = ~np.isnan(paths)
    n_alive = defined.sum(axis=0)
    mean = np.full(s_grid.size, np.nan)
    var = np.full(s_grid.size, np.nan)
    q05 = np.full(s_grid.size, np.nan)
    q95 = np.full(s_grid.size, np.nan)
    ok = n_alive > 0
    if ok.any():
        block = paths[:, ok]
        mean[ok] = np.nanmean(block, axis=0)
        var[ok] = np.nanvar(block, axis=0)
        q05[ok] = np.nanquantile(block, 0.05, axis=0)
        q95[ok] = np.nanquantile(block, 0.95, axis=0)
    start = float(mean[0]) if ok[0] else math.nan
    return AncestralSeries(s=s_grid, mean=mean, variance=var,
                           q05=q05, q95=q95, start=start)


def _pair_coalescence(table: LineageTable, a: int, b: int,
                      t_sample: float) -> float:
    """Backward time at which the two sampled lineages first share an
    ancestor; NaN when they descend from different founders."""
    child_a = -1
    child_b = -1
    hops = 0
    while a != b:
        if a > b:
            child_a, a = a, int(table.parent[a])
        else:
            child_b, b = b, int(table.parent[b])
        if a < 0 or b < 0:
            return math.nan
        hops += 1
        if hops > 2 * table.size:
            raise OrphanChain("parent chains do not terminate")
    s_a = t_sample - float(table.birth[child_a]) if child_a >= 0 else 0.0
    s_b = t_sample - float(table.birth[child_b]) if child_b >= 0 else 0.0
    return max(s_a, s_b)


def coalescence_times(table: LineageTable, sample, t_sample: float) -> np.ndarray:
    """Pairwise coalescence times T2 over all sampled pairs.

    Pairs are enumerated in lexicographic order of the sample array.
    Each entry is the backward time to the most recent common ancestor,
    found by walking the higher id upward (parents always carry smaller
    ids); NaN marks pairs with no common ancestor in the table.
    """
    sample = np.asarray(sample, dtype=np.int64)
    out = []
    for i in range(sample.size):
        for j in range(i + 1, sample.size):
            out.append(_pair_coalescence(table, int(sample[i]),
                                         int(sample[j]), t_sample))
    return np.asarray(out, dtype=float)
