"""Effective diffusivity estimation and scaling diagnostics for the walks.

The diffusion matrix is estimated from the slope of displacement
covariances over the second half of the horizon (mean-square-displacement
regression with batch-based standard errors), either for the occupancy walk
directly or for the conductance walk followed by the exact random time
change.  In one dimension with independent occupancies a closed-form value
is available through the harmonic-mean conductivity of the conductance
walk divided by the mean occupancy; it is re-validated by Monte Carlo
before being used as ground truth anywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import Environment, EnvLaw, sample_environment
from .kernels import heat_evolve_grid, periodized_gaussian
from .lattice import torus
from .random_walk import generator, semigroup_action_grid, walk_ensemble
from .seeding import derive_seed, rng_from
from .testfunctions import TestFunction

SIGMA_METHODS = ("msd_alpha_walk", "msd_omega_walk_timechange", "corrector_1d")
FINE_GRID = 4096


@dataclass(frozen=True)
class SigmaEstimate:
    """Estimated diffusion matrix with standard errors and provenance."""

    sigma: np.ndarray
    stderr: np.ndarray
    method: str
    replicas: int
    horizon: float
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        e = np.atleast_2d(np.asarray(self.stderr, dtype=float))
        asym = np.abs(s - s.T)
        tol = 3.0 * (e + e.T) + 1e-12
        if np.any(asym > tol):
            raise ValueError("estimated matrix is asymmetric beyond stderr")
        if np.linalg.eigvalsh((s + s.T) / 2.0).min() <= 0:
            raise ValueError("estimated matrix is not positive-definite")
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "stderr", e)

    def scalar(self) -> float:
        return float(self.sigma[0, 0])

    def to_json_dict(self) -> dict:
        return {"sigma": self.sigma.tolist(), "stderr": self.stderr.tolist(),
                "method": self.method, "replicas": self.replicas,
                "horizon": self.horizon,
                "aux": {k: float(v) for k, v in self.aux.items()}}


def _slope(ts: np.ndarray, ys: np.ndarray) -> float:
    """Least-squares slope of ys against ts (ys may be (S,) or (S, k))."""
    t0 = ts - ts.mean()
    return (t0 @ ys) / (t0 @ t0)


def _cov_series(disp: np.ndarray) -> np.ndarray:
    """Displacement covariance per snapshot: (S, d, d) from (S, R, d)."""
    centered = disp - disp.mean(axis=1, keepdims=True)
    return np.einsum("sri,srj->sij", centered, centered) / (disp.shape[1] - 1)


def estimate_sigma_msd(law: EnvLaw, dims, kind: str, horizon: float,
                       replicas: int, seed: int, n_env: int = None,
                       n_batches: int = 32,
                       grid_points: int = 17) -> SigmaEstimate:
    """Diffusion matrix from displacement covariance slopes on [T/2, T].

    Replicas are spread over ``n_env`` independent environments; every
    (environment, replica-chunk) contributes one batch slope, and the
    estimate and its standard error are the batch mean and its error.
    Unwrapped displacements must stay within half the torus, otherwise the
    periodized environment is being re-sampled and the run is rejected.
    """
    if kind not in ("msd_alpha_walk", "msd_omega_walk_timechange"):
        raise ValueError("kind must be an MSD method")
    d = len(dims)
    if n_env is None:
        n_env = 1 if law.kind == "constant" else 32
    per_env = max(1, replicas // n_env)
    ts = np.linspace(horizon / 2.0, horizon, grid_points)
    walk_kind = "alpha_walk" if kind == "msd_alpha_walk" else "omega_walk"
    clock = "process" if kind == "msd_alpha_walk" else "timechanged"

    batch_slopes = []
    lambda_slopes = []
    total_jumps = 0.0
    for e in range(n_env):
        env = sample_environment(law, dims, derive_seed(seed, "env", e))
        expected_jumps = horizon * float(
            env.alpha[env.torus.neighbors].sum(axis=1).mean())
        if expected_jumps < 100:
            raise ValueError(
                f"horizon too short: ~{expected_jumps:.0f} jumps per replica, "
                "need at least 100")
        # scattered starting points let one environment self-average; the
        # batch error then covers the quenched spatial fluctuation honestly
        x0s = rng_from(seed, "x0", e).integers(env.n_sites, size=per_env)
        ens = walk_ensemble(env, walk_kind, x0s, ts, per_env,
                            derive_seed(seed, "walk", e), clock=clock)
        max_disp = np.abs(ens.displacement).max()
        if max_disp > min(dims) / 2:
            raise ValueError(
                f"displacement {max_disp} exceeds half the torus "
                f"{min(dims) // 2}: grow the torus")
        total_jumps += float(ens.jump_counts.mean())
        chunks = max(1, n_batches // n_env)
        for block in np.array_split(ens.displacement, chunks, axis=1):
            cov = _cov_series(block.astype(float))
            batch_slopes.append(_slope(ts, cov.reshape(grid_points, -1))
                                .reshape(d, d))
        if kind == "msd_omega_walk_timechange":
            raw = walk_ensemble(env, "omega_walk", x0s, ts, per_env,
                                derive_seed(seed, "rawwalk", e),
                                clock="process")
            cov = _cov_series(raw.displacement.astype(float))
            lambda_slopes.append(_slope(ts, cov.reshape(grid_points, -1))
                                 .reshape(d, d))

    slopes = np.array(batch_slopes)
    sigma = slopes.mean(axis=0)
    stderr = slopes.std(axis=0, ddof=1) / np.sqrt(len(slopes))
    aux = {}
    if kind == "msd_omega_walk_timechange":
        lam = np.array(lambda_slopes).mean(axis=0)
        aux["lambda_hat"] = float(lam[0, 0])
        aux["sigma_from_lambda"] = float(lam[0, 0] / law.mean_alpha())
    return SigmaEstimate(sigma=sigma, stderr=stderr, method=kind,
                         replicas=per_env * n_env, horizon=float(horizon),
                         aux=aux)


def sigma_oracle_1d(law: EnvLaw) -> float:
    """Closed-form diffusivity for independent occupancies in one dimension.

    The conductance walk across bond (x, x+1) sees omega = alpha_x
    alpha_{x+1}; its harmonic corrector has increments proportional to
    1/omega, giving a conductance-walk limit 2 / E[1/omega] =
    2 / E[1/alpha]^2 for independent occupancies, and the time change
    divides by E[alpha].
    """
    if law.kind not in ("iid", "constant"):
        raise ValueError("the closed form requires independent occupancies")
    return 2.0 / (law.mean_inv_alpha() ** 2 * law.mean_alpha())


# ---------------------------------------------------------------------------
# semigroup convergence diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    """Distance between rescaled lattice semigroups and the Gaussian limit."""

    n_grid: tuple
    sup_metric: dict
    l1_metric: dict

    def to_json_dict(self) -> dict:
        return {"name": "semigroup_convergence", "N_grid": list(self.n_grid),
                "sup_metric": {str(k): v for k, v in self.sup_metric.items()},
                "l1_metric": {str(k): v for k, v in self.l1_metric.items()}}


def _reference_on_lattice(G: TestFunction, sigma, t: float, N: int,
                          d: int) -> np.ndarray:
    """The Gaussian semigroup applied to G, sampled at the lattice points.

    G is sampled on a fine grid of the unit torus (which the lattice
    divides), evolved spectrally and subsampled.
    """
    if d == 1:
        M = FINE_GRID
        u = np.linspace(0.0, 1.0, M, endpoint=False)[:, None]
        vals = np.asarray(G(u), dtype=float)
    elif d == 2:
        M = 512
        g1 = np.linspace(0.0, 1.0, M, endpoint=False)
        uu, vv = np.meshgrid(g1, g1, indexing="ij")
        vals = np.asarray(
            G(np.stack([uu.reshape(-1), vv.reshape(-1)], axis=1))
        ).reshape(M, M)
    else:
        raise NotImplementedError("reference evolution provided for d <= 2")
    if M % N != 0:
        raise ValueError("N must divide the fine evaluation grid")
    out = heat_evolve_grid(vals, sigma, t)
    step = M // N
    return out[(slice(None, None, step),) * d].reshape(-1)


def semigroup_convergence(env_family, G: TestFunction, sigma, T: float,
                          t_grid, tol: float = 1e-10) -> ConvergenceReport:
    """Sup and weighted-l1 distance between the diffusively rescaled lattice
    semigroup applied to G and the Gaussian evolution, per torus scale.

    Each environment in the family must be a cubic torus of side N; time t
    on the macroscopic clock corresponds to t N^2 for the walk.
    """
    times = sorted({float(t) for t in t_grid} | {float(T)})
    sup_metric = {}
    l1_metric = {}
    for env in env_family:
        N = env.dims[0]
        if any(L != N for L in env.dims):
            raise ValueError("environments must be cubic tori")
        d = env.ndim
        g = np.asarray(G(env.torus.positions(scale=N)), dtype=float)
        gen = generator(env, "alpha_walk")
        lattice_vecs = semigroup_action_grid(gen, g,
                                             [t * N ** 2 for t in times], tol)
        sup_val = 0.0
        l1_val = 0.0
        for t, vec in zip(times, lattice_vecs):
            ref = _reference_on_lattice(G, sigma, t, N, d)
            diff = np.abs(vec - ref)
            sup_val = max(sup_val, float(diff.max()))
            l1_val = max(l1_val, float((diff * env.alpha).sum() / N ** d))
        sup_metric[N] = sup_val
        l1_metric[N] = l1_val
    return ConvergenceReport(n_grid=tuple(sorted(sup_metric)),
                             sup_metric=sup_metric, l1_metric=l1_metric)


def local_clt_check(env_family, t_grid, ell: float, sigma,
                    tol: float = 1e-10) -> dict:
    """max over |y/N| <= ell and t in the grid of
    |N^d p_{tN^2}(0, y) - k_t(y/N)| with the periodized Gaussian density.

    The grid must stay away from t = 0, where no local comparison holds.
    """
    times = sorted(float(t) for t in t_grid)
    if times[0] <= 0:
        raise ValueError("the local comparison requires t bounded away from 0")
    metrics = {}
    for env in env_family:
        N = env.dims[0]
        if any(L != N for L in env.dims):
            raise ValueError("environments must be cubic tori")
        d = env.ndim
        tor = env.torus
        gen = generator(env, "alpha_walk")
        delta = np.zeros(tor.n_sites)
        delta[0] = 1.0
        cols = semigroup_action_grid(gen, delta, [t * N ** 2 for t in times],
                                     tol)
        pts = tor.positions(scale=N)
        pts = pts - np.round(pts)  # minimal image around the origin
        near = np.sqrt((pts ** 2).sum(axis=1)) <= ell
        m = env.alpha.astype(float)
        worst = 0.0
        for t, col in zip(times, cols):
            row = m * col / m[0]          # p_{tN^2}(0, y) by reversibility
            dens = periodized_gaussian(pts[near], sigma, t)
            diff = np.abs(N ** d * row[near] - dens)
            worst = max(worst, float(diff.max()))
        metrics[N] = worst
    return metrics


# ---------------------------------------------------------------------------
# space-time modulus diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderFit:
    """Fitted constant and exponent of the space-time semigroup modulus."""

    C_hat: float
    gamma_hat: float
    violation_fraction: float
    degenerate: bool
    n_pairs: int

    def to_json_dict(self) -> dict:
        return {"name": "holder_modulus", "C_hat": self.C_hat,
                "gamma_hat": self.gamma_hat,
                "violation_fraction": self.violation_fraction,
                "degenerate": self.degenerate, "n_pairs": self.n_pairs}


def holder_modulus_estimate(env: Environment, G: TestFunction, N: int,
                            t_range, n_times: int = 10, n_pairs: int = 4000,
                            seed: int = 0, tol: float = 1e-10) -> HolderFit:
    """Log-log fit of semigroup increments against the parabolic modulus
    (sqrt|t-s| v |x/N - y/N|) / sqrt(t ^ s), over random space-time pairs.

    The constant is then raised to the maximal observed ratio, so the
    reported violation fraction is zero unless the fit degenerates.
    """
    lo, hi = float(t_range[0]), float(t_range[1])
    if lo <= 0:
        raise ValueError("t_range must stay away from 0")
    times = np.linspace(lo, hi, n_times)
    gen = generator(env, "alpha_walk")
    g = np.asarray(G(env.torus.positions(scale=N)), dtype=float)
    vecs = semigroup_action_grid(gen, g, [t * N ** 2 for t in times], tol)
    vecs = np.array(vecs)
    tor = env.torus

    rng = rng_from(seed, "holder", N)
    i1 = rng.integers(0, n_times, n_pairs)
    i2 = rng.integers(0, n_times, n_pairs)
    x1 = rng.integers(0, tor.n_sites, n_pairs)
    x2 = rng.integers(0, tor.n_sites, n_pairs)
    incr = np.abs(vecs[i1, x1] - vecs[i2, x2])
    dist = tor.torus_distance(x1, x2) / N
    t1, t2 = times[i1], times[i2]
    modulus = np.maximum(np.sqrt(np.abs(t1 - t2)), dist) / np.sqrt(
        np.minimum(t1, t2))

    sup = G.sup_norm()
    keep = (incr > 1e-13) & (modulus > 0)
    if keep.sum() < 10:
        return HolderFit(C_hat=0.0, gamma_hat=0.0, violation_fraction=0.0,
                         degenerate=True, n_pairs=int(n_pairs))
    ly = np.log(incr[keep] / sup)
    lm = np.log(modulus[keep])
    gamma = float(_slope(lm, ly))
    c_hat = float(np.max(incr[keep] / (sup * modulus[keep] ** gamma)))
    viol = float(np.mean(incr[keep] > c_hat * sup * modulus[keep] ** gamma
                         + 1e-12))
    return HolderFit(C_hat=c_hat, gamma_hat=gamma, violation_fraction=viol,
                     degenerate=False, n_pairs=int(keep.sum()))
