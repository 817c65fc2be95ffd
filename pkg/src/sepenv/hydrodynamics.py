"""Empirical density fields and the diffusive scaling limit experiment.

Macroscopic space is the unit torus; a torus of side N embeds as x -> x/N
and macroscopic time t corresponds to process time t N^2.  The limiting
field pairs a test function with E[alpha] rho_t, where rho solves the heat
equation with generator (1/2) div(Sigma grad) started from the initial
profile.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .environment import Environment, sample_environment
from .exclusion import binomial_config, sep_ensemble, sep_ensemble_multi_env
from .kernels import HeatSolution
from .lattice import torus
from .random_walk import generator, semigroup_action
from .seeding import derive_seed
from .testfunctions import MacroscopicProfile, TestFunction

FINE_GRID = 4096


class BudgetError(RuntimeError):
    """Raised when the projected event count exceeds the configured cap."""


def _lattice_G(G: TestFunction, dims, N: int) -> np.ndarray:
    return np.asarray(G(torus(dims).positions(scale=N)), dtype=float)


def density_field(env: Environment, eta, N: int, G: TestFunction):
    """X(G) = N^{-d} sum_x G(x/N) eta(x); eta may be a replica block."""
    g = _lattice_G(G, env.dims, N)
    eta = np.asarray(eta, dtype=float)
    return (eta @ g) / N ** env.ndim


def density_field_bound(env: Environment, N: int, G: TestFunction) -> float:
    """c_max N^{-d} sum_x |G(x/N)|, a hard bound on |X(G)|."""
    g = _lattice_G(G, env.dims, N)
    return float(env.c_max * np.abs(g).sum() / N ** env.ndim)


def heat_solution(sigma, rho_bar: MacroscopicProfile, t: float,
                  method: str = "fourier", grid: int = FINE_GRID) -> HeatSolution:
    """Unit-torus heat evolution of a macroscopic profile at time t."""
    return HeatSolution(sigma, rho_bar, t, grid=grid, method=method)


def limit_field(mean_alpha: float, sigma, rho_bar: MacroscopicProfile,
                G: TestFunction, t: float, grid: int = FINE_GRID) -> float:
    """pi_t(G) = E[alpha] int G(u) rho_t(u) du on the unit torus.

    Periodic trapezoid quadrature on the fine grid is spectrally accurate
    for these smooth integrands.
    """
    u = np.linspace(0.0, 1.0, grid, endpoint=False)[:, None]
    gv = np.asarray(G(u), dtype=float)
    if t == 0:
        rv = np.asarray(rho_bar(u), dtype=float)
    else:
        rv = heat_solution(sigma, rho_bar, t, grid=grid).values
    return float(mean_alpha * np.mean(gv * rv))


def consistency_check(env: Environment, rho_bar: MacroscopicProfile, N: int,
                      G: TestFunction, delta: float, samples: int,
                      seed: int) -> float:
    """Estimated probability that |X_0(G) - pi(G)| exceeds delta under the
    slowly varying product-binomial initial law."""
    target = limit_field(env.law.mean_alpha(), 1.0, rho_bar, G, 0.0)
    etas = binomial_config(env, rho_bar, seed, N=N, replicas=samples)
    vals = density_field(env, etas, N, G)
    return float(np.mean(np.abs(vals - target) > delta))


@dataclass(frozen=True)
class DensityFieldSeries:
    """Field values of one path on a macroscopic time grid.

    The hard bound c_max N^{-d} sum |G(x/N)| per test function is checked at
    construction for every recorded value.
    """

    times: np.ndarray           # (S,) macroscopic
    values: np.ndarray          # (S, n_G)
    N: int
    env_hash: str
    seed: int
    bounds: np.ndarray = None   # (n_G,)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.bounds is not None and np.any(
                np.abs(v) > np.asarray(self.bounds) + 1e-12):
            raise ValueError("field value exceeds the occupancy bound")
        object.__setattr__(self, "values", v)

    def to_json_dict(self) -> dict:
        return {"times": [float(t) for t in self.times],
                "values": self.values.tolist(), "N": self.N,
                "env_hash": self.env_hash, "seed": self.seed}


def record_density_series(env: Environment, eta0, N: int, G_list, t_grid,
                          seed: int) -> DensityFieldSeries:
    """Evolve one configuration and record X_t(G) on the macroscopic grid."""
    times = sorted(float(t) for t in t_grid)
    ens = sep_ensemble(env, np.asarray(eta0)[None, :],
                       [t * N ** 2 for t in times], seed)
    vals = np.array([[float(density_field(env, ens.configs[s][0], N, G))
                      for G in G_list] for s, _ in enumerate(times)])
    bounds = np.array([density_field_bound(env, N, G) for G in G_list])
    return DensityFieldSeries(times=np.asarray(times), values=vals, N=N,
                              env_hash=env.content_hash(), seed=int(seed),
                              bounds=bounds)


@dataclass(frozen=True)
class VarianceBoundReport:
    """Martingale-part variance against its rigorous upper bound."""

    variance: float
    bound: float
    stderr: float
    replicas: int
    passed: bool

    def to_json_dict(self) -> dict:
        return {"name": "variance_bound", "variance": self.variance,
                "bound": self.bound, "stderr": self.stderr,
                "replicas": self.replicas, "pass": self.passed}


def variance_bound_check(env: Environment, p_or_profile, N: int,
                         G: TestFunction, t, replicas: int, seed: int,
                         engine: str = "ladder", n_batches: int = 32):
    """Variance of X_t(G) - X_0(S_{tN^2} G) across replicas.

    The subtrahend is computed exactly per replica by applying the
    one-walker semigroup to the test vector; the variance must stay below
    (1 / (2 N^d)) N^{-d} sum_x |G(x/N)|^2 alpha_x with 4 stderr slack.
    ``t`` may be a single macroscopic time or a list (one shared ensemble);
    a dict of reports is returned for a list.
    """
    scalar_t = np.isscalar(t)
    t_list = [float(t)] if scalar_t else sorted(float(v) for v in t)
    d = env.ndim
    g = _lattice_G(G, env.dims, N)
    gen = generator(env, "alpha_walk")
    eta0 = binomial_config(env, p_or_profile, derive_seed(seed, "init"),
                           N=N, replicas=replicas)
    ens = sep_ensemble(env, eta0, [tv * N ** 2 for tv in t_list],
                       derive_seed(seed, "run"), engine=engine)
    bound = float((np.abs(g) ** 2 * env.alpha).sum() / N ** d / (2.0 * N ** d))

    out = {}
    for s, tv in enumerate(t_list):
        smoothed = semigroup_action(gen, g, tv * N ** 2)
        x_t = (ens.configs[s].astype(float) @ g) / N ** d
        x_0s = (eta0.astype(float) @ smoothed) / N ** d
        mart = x_t - x_0s
        var = float(mart.var(ddof=1))
        bvars = np.array([b.var(ddof=1)
                          for b in np.array_split(mart, n_batches)])
        stderr = float(bvars.std(ddof=1) / np.sqrt(len(bvars)))
        out[tv] = VarianceBoundReport(variance=var, bound=bound,
                                      stderr=stderr, replicas=replicas,
                                      passed=var <= bound + 4.0 * stderr)
    return out[t_list[0]] if scalar_t else out


# ---------------------------------------------------------------------------
# the end-to-end scaling-limit experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentReport:
    """Per-(N, t, G) comparison of the empirical field with its limit."""

    n_grid: tuple
    t_grid: tuple
    g_ids: tuple
    cells: dict                 # (N, t, g_id) -> {empirical, limit, abs_err, stderr}
    err: dict                   # N -> max abs_err over (t, G)
    err_stderr: dict            # N -> stderr at the arg-max cell
    projected_events: dict      # N -> projected event count
    replicas_per_env: int
    n_env: int
    long_rows: list = field(repr=False, default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "name": "hdl_experiment",
            "N_grid": list(self.n_grid),
            "t_grid": list(self.t_grid),
            "G_ids": list(self.g_ids),
            "cells": {f"N={n}|t={t}|G={g}": v
                      for (n, t, g), v in sorted(self.cells.items())},
            "err": {str(n): e for n, e in sorted(self.err.items())},
            "err_stderr": {str(n): e for n, e in sorted(self.err_stderr.items())},
            "projected_events": {str(n): e for n, e in
                                 sorted(self.projected_events.items())},
            "replicas_per_env": self.replicas_per_env,
            "n_env": self.n_env,
        }

    def csv_rows(self):
        yield ("N", "t", "G_id", "replica", "value")
        for row in self.long_rows:
            yield row


def _hdl_single_scale(law, d, N, rho_bar, G_list, t_grid, sigma, n_env,
                      replicas, seed, event_budget):
    dims = (N,) * d
    tor = torus(dims)
    rows = n_env * replicas
    alpha_rows = np.empty((rows, tor.n_sites), dtype=np.int64)
    eta0 = np.empty((rows, tor.n_sites), dtype=np.int64)
    envs = []
    for e in range(n_env):
        env = sample_environment(law, dims, derive_seed(seed, "env", N, e))
        envs.append(env)
        block = binomial_config(env, rho_bar,
                                derive_seed(seed, "init", N, e), N=N,
                                replicas=replicas)
        alpha_rows[e * replicas:(e + 1) * replicas] = env.alpha
        eta0[e * replicas:(e + 1) * replicas] = block

    horizon = max(t_grid) * N ** 2
    init_rate = float((eta0[:, tor.bond_from]
                       * (alpha_rows[:, tor.bond_to]
                          - eta0[:, tor.bond_to])).sum(axis=1).mean())
    projected = init_rate * horizon * rows
    if event_budget is not None and projected > event_budget:
        raise BudgetError(
            f"projected {projected:.3g} events at N={N} exceeds the budget "
            f"{event_budget:.3g}")
    if projected > 5e8:
        warnings.warn(f"projected event count {projected:.3g} at N={N} is "
                      "large; consider shrinking t_grid or replicas")

    times = sorted(float(t) for t in t_grid)
    ens = sep_ensemble_multi_env(alpha_rows, dims, eta0,
                                 [t * N ** 2 for t in times],
                                 derive_seed(seed, "run", N))
    mean_alpha = law.mean_alpha()
    cells = {}
    long_rows = []
    worst = (0.0, 0.0)
    for s, t in enumerate(times):
        eta_t = ens.configs[s].astype(float)
        for j, G in enumerate(G_list):
            g = _lattice_G(G, dims, N)
            vals = (eta_t @ g) / N ** d
            emp = float(vals.mean())
            # environment-level batches: rows within one environment are
            # correlated through the quenched field
            env_means = vals.reshape(n_env, replicas).mean(axis=1)
            se = float(env_means.std(ddof=1) / np.sqrt(n_env))
            lim = limit_field(mean_alpha, sigma, rho_bar, G, t)
            err = abs(emp - lim)
            cells[(N, t, f"G{j}")] = {"empirical": emp, "limit": lim,
                                      "abs_err": err, "stderr": se}
            for r, v in enumerate(vals):
                long_rows.append((N, t, f"G{j}", r, float(v)))
            if err > worst[0]:
                worst = (err, se)
    return cells, worst, projected, long_rows


def hdl_experiment(law, d: int, N_grid, rho_bar: MacroscopicProfile, G_list,
                   t_grid, sigma, replicas: int, seed: int, n_env: int = 20,
                   threads: int = 1,
                   event_budget: float = None) -> ExperimentReport:
    """Simulate the particle system across scales and compare the empirical
    density fields with the heat-equation limit.

    For each N, ``n_env`` environments are drawn, each carrying ``replicas``
    paths started from the slowly varying product-binomial law for
    ``rho_bar``; err(N) is the worst absolute deviation of the averaged
    field from pi_t(G) over the time grid and test functions.
    """
    if not rho_bar.verify_range():
        raise ValueError("profile must map into [0, 1]")
    N_grid = sorted(int(N) for N in N_grid)
    tasks = [(law, d, N, rho_bar, G_list, t_grid, sigma, n_env, replicas,
              seed, event_budget) for N in N_grid]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _hdl_single_scale(*a), tasks))
    else:
        results = [_hdl_single_scale(*a) for a in tasks]

    cells = {}
    err = {}
    err_stderr = {}
    projected = {}
    long_rows = []
    for N, (c, worst, proj, rows) in zip(N_grid, results):
        cells.update(c)
        err[N] = worst[0]
        err_stderr[N] = worst[1]
        projected[N] = proj
        long_rows.extend(rows)
    t_sorted = tuple(sorted(float(t) for t in t_grid))
    return ExperimentReport(n_grid=tuple(N_grid), t_grid=t_sorted,
                            g_ids=tuple(f"G{j}" for j in range(len(G_list))),
                            cells=cells, err=err, err_stderr=err_stderr,
                            projected_events=projected,
                            replicas_per_env=replicas, n_env=n_env,
                            long_rows=long_rows)
