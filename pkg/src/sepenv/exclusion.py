"""Partial exclusion dynamics with site-dependent maximal occupancies.

Two independent constructions of the same process are provided and
cross-validated: a rejection-free event-driven simulation with exact bond
rates eta(x) (alpha_y - eta(y)), and the ladder lift in which every site x
carries alpha_x levels of an ordinary 0/1 exclusion process evolved by
rate-1 stirring clocks on level pairs, projected back to site occupancies.

Alongside the single-trajectory simulators there are replica ensembles
(vectorized across independent copies) powering the statistical checks:
stationarity of product-binomial measures, the one-walker duality identity,
the mild-solution representation of mean densities, and the predictable
covariation structure of the occupation martingales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

import numba

from .environment import Environment
from .lattice import torus
from .random_walk import generator, semigroup_action_grid
from .seeding import derive_seed, rng_from

DENSE_SITE_CAP = 4096
MAX_DUAL_PARTICLES = 4


# ---------------------------------------------------------------------------
# configurations and elementary moves
# ---------------------------------------------------------------------------

def validate_config(env: Environment, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=np.int64)
    if eta.shape[-1] != env.n_sites:
        raise ValueError("configuration length must match the torus")
    if np.any(eta < 0) or np.any(eta > env.alpha):
        raise ValueError("occupancies must satisfy 0 <= eta(x) <= alpha_x")
    return eta


def apply_move(env: Environment, eta, x: int, y: int) -> np.ndarray:
    """Configuration after moving one particle from x to a neighbor y.

    Blocked moves (empty source or full target) return the configuration
    unchanged.
    """
    if y not in env.torus.neighbors[x]:
        raise ValueError(f"sites {x}, {y} are not nearest neighbors")
    eta = validate_config(env, eta).copy()
    if eta[x] >= 1 and eta[y] < env.alpha[y]:
        eta[x] -= 1
        eta[y] += 1
    return eta


def density_ratio(env: Environment, eta) -> np.ndarray:
    """Occupancy fractions eta(x) / alpha_x."""
    return np.asarray(eta, dtype=float) / env.alpha


@dataclass(frozen=True)
class SepTrajectory:
    """Event record (time, from_site, to_site) of one exclusion path."""

    initial: np.ndarray
    times: np.ndarray
    from_sites: np.ndarray
    to_sites: np.ndarray
    horizon: float

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    def replay(self, env: Environment) -> np.ndarray:
        """Final configuration, checking bounds and conservation throughout."""
        eta = validate_config(env, self.initial).copy()
        total = eta.sum()
        prev_t = 0.0
        for t, x, y in zip(self.times, self.from_sites, self.to_sites):
            if not (prev_t < t <= self.horizon):
                raise ValueError("event times must increase within the horizon")
            prev_t = float(t)
            if y not in env.torus.neighbors[x]:
                raise ValueError("event endpoints must be nearest neighbors")
            eta[x] -= 1
            eta[y] += 1
            if eta[x] < 0 or eta[y] > env.alpha[y]:
                raise ValueError("replay violates occupancy bounds")
            if eta.sum() != total:
                raise ValueError("replay violates particle conservation")
        return eta

    def config_at(self, env: Environment, t: float) -> np.ndarray:
        eta = validate_config(env, self.initial).copy()
        for tt, x, y in zip(self.times, self.from_sites, self.to_sites):
            if tt > t:
                break
            eta[x] -= 1
            eta[y] += 1
        return eta

    def to_csv_rows(self, replica: int = 0):
        for t, x, y in zip(self.times, self.from_sites, self.to_sites):
            yield replica, float(t), int(x), int(y)


# ---------------------------------------------------------------------------
# direct event-driven simulation
# ---------------------------------------------------------------------------

def _bond_rates(env: Environment, eta: np.ndarray) -> np.ndarray:
    tor = env.torus
    return (eta[tor.bond_from]
            * (env.alpha[tor.bond_to] - eta[tor.bond_to])).astype(np.int64)


def simulate_sep_direct(env: Environment, eta0, horizon: float,
                        seed: int) -> SepTrajectory:
    """Rejection-free event-driven path with exact per-bond rates.

    After each move only the rates of bonds incident to the touched sites
    are recomputed.
    """
    eta = validate_config(env, eta0).copy()
    rng = rng_from(seed, "sep_direct")
    tor = env.torus
    a = env.alpha
    nbr = tor.neighbors
    n_dir = tor.n_directions
    rates = _bond_rates(env, eta).astype(float)
    total = rates.sum()

    t = 0.0
    times, froms, tos = [], [], []
    while total > 0:
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        cum = np.cumsum(rates)
        b = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        b = min(b, rates.size - 1)
        x = int(tor.bond_from[b])
        y = int(tor.bond_to[b])
        eta[x] -= 1
        eta[y] += 1
        times.append(t)
        froms.append(x)
        tos.append(y)
        touched = {x, y, *nbr[x].tolist(), *nbr[y].tolist()}
        for u in touched:
            for j in range(n_dir):
                bb = u * n_dir + j
                v = nbr[u, j]
                old = rates[bb]
                new = float(eta[u] * (a[v] - eta[v]))
                rates[bb] = new
                total += new - old
        total = max(total, 0.0)
        if total < 1e-9:  # guard against drift; exact rates are integers
            total = rates.sum()
    return SepTrajectory(initial=np.asarray(eta0, dtype=np.int64),
                         times=np.array(times),
                         from_sites=np.array(froms, dtype=np.int64),
                         to_sites=np.array(tos, dtype=np.int64),
                         horizon=float(horizon))


# ---------------------------------------------------------------------------
# ladder (stirring) construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LadderConfig:
    """0/1 occupancies on the level sites (x, i), i < alpha_x, flattened."""

    env: Environment = field(repr=False)
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.shape != (int(self.env.alpha.sum()),):
            raise ValueError("bits must cover all ladder levels")
        if np.any(bits > 1):
            raise ValueError("ladder occupancies are 0/1")
        object.__setattr__(self, "bits", bits)

    def project(self) -> np.ndarray:
        """Site occupancies sum_i bits(x, i)."""
        off = ladder_offsets(self.env)
        return np.add.reduceat(self.bits.astype(np.int64), off[:-1])


def ladder_offsets(env: Environment) -> np.ndarray:
    off = np.zeros(env.n_sites + 1, dtype=np.int64)
    np.cumsum(env.alpha, out=off[1:])
    return off


def ladder_from_config(env: Environment, eta) -> LadderConfig:
    """Deterministic lift filling each site's levels bottom to top."""
    eta = validate_config(env, eta)
    off = ladder_offsets(env)
    levels = np.arange(off[-1]) - np.repeat(off[:-1], env.alpha)
    bits = (levels < np.repeat(eta, env.alpha)).astype(np.uint8)
    return LadderConfig(env=env, bits=bits)


def _ladder_bond_tables(env: Environment):
    """Unordered site bonds with their level-pair counts and cumulative sum."""
    x, y = env.torus.unordered_bond_endpoints()
    pair_counts = (env.alpha[x] * env.alpha[y]).astype(np.int64)
    return x, y, pair_counts, np.cumsum(pair_counts)


def simulate_sep_ladder(env: Environment, ladder0: LadderConfig,
                        horizon: float, seed: int) -> SepTrajectory:
    """Stirring construction: every level pair on a lattice bond swaps at
    rate one; the projected site path is returned.

    Level pairs are sampled by superposition: an aggregate clock of rate
    alpha_x alpha_y per site bond, then a uniform level pair, which realizes
    independent rate-1 clocks exactly.
    """
    if not isinstance(ladder0, LadderConfig):
        raise TypeError("ladder0 must be a LadderConfig")
    rng = rng_from(seed, "sep_ladder")
    a = env.alpha
    off = ladder_offsets(env)
    xb, yb, counts, cum = _ladder_bond_tables(env)
    total = float(cum[-1])
    bits = ladder0.bits.copy()
    eta0 = ladder0.project()

    t = 0.0
    times, froms, tos = [], [], []
    while True:
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        b = int(np.searchsorted(cum, rng.random() * total, side="right"))
        b = min(b, counts.size - 1)
        x, y = int(xb[b]), int(yb[b])
        li = off[x] + int(rng.integers(a[x]))
        lj = off[y] + int(rng.integers(a[y]))
        bi, bj = int(bits[li]), int(bits[lj])
        if bi == bj:
            continue
        bits[li], bits[lj] = bj, bi
        times.append(t)
        if bi == 1:  # particle moved x -> y
            froms.append(x)
            tos.append(y)
        else:
            froms.append(y)
            tos.append(x)
    return SepTrajectory(initial=eta0, times=np.array(times),
                         from_sites=np.array(froms, dtype=np.int64),
                         to_sites=np.array(tos, dtype=np.int64),
                         horizon=float(horizon))


# ---------------------------------------------------------------------------
# replica ensembles
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _ladder_kernel(eta, xb, yb, ax_b, ay_b, cum_pairs, snap_times, seed,
                   snaps):
    """Sequential per-replica ladder chain (shared aggregate clock rate).

    One global stream seeds all replicas in order, so the run is
    deterministic in the seed.  Snapshots are written when a replica's clock
    first passes each snapshot time.
    """
    R, L = eta.shape
    S = snap_times.size
    total = cum_pairs[-1]
    B = cum_pairs.size
    np.random.seed(seed)
    for r in range(R):
        t = 0.0
        si = 0
        while si < S:
            t_new = t + np.random.exponential(1.0 / total)
            while si < S and t_new >= snap_times[si]:
                for c in range(L):
                    snaps[si, r, c] = eta[r, c]
                si += 1
            if si >= S:
                break
            u = np.random.random() * total
            lo = 0
            hi = B
            while lo < hi:
                mid = (lo + hi) >> 1
                if cum_pairs[mid] <= u:
                    lo = mid + 1
                else:
                    hi = mid
            b = lo if lo < B else B - 1
            x = xb[b]
            y = yb[b]
            ex = float(eta[r, x])
            ey = float(eta[r, y])
            w = ax_b[b] * ay_b[b]
            p_xy = ex * (ay_b[b] - ey) / w
            p_yx = ey * (ax_b[b] - ex) / w
            v = np.random.random()
            if v < p_xy:
                eta[r, x] -= 1
                eta[r, y] += 1
            elif v < p_xy + p_yx:
                eta[r, x] += 1
                eta[r, y] -= 1
            t = t_new


@dataclass(frozen=True)
class SepEnsemble:
    """Configurations of independent replicas at common snapshot times.

    ``integrals[:, k]`` holds the pathwise time integral of the k-th
    requested integrand along each replica up to the final snapshot time.
    """

    times: np.ndarray        # (S,)
    configs: np.ndarray      # (S, R, L) int16
    integrals: np.ndarray    # (R, K)


def _run_ensemble(alpha_rows, dims, eta0, snap_times, rng, engine,
                  integrands=()):
    """Shared driver for the direct and ladder replica engines.

    The ladder branch samples the aggregate level-pair clock of each site
    bond (rate alpha_x alpha_y) and resolves the uniformly chosen level pair
    analytically: whatever the current level arrangement, exactly
    eta(x)(alpha_y - eta(y)) of the alpha_x alpha_y pairs move a particle
    x -> y, so the projected chain is produced without materializing bits.
    """
    tor = torus(dims)
    eta = np.array(eta0, dtype=np.int64)
    if eta.ndim != 2:
        raise ValueError("eta0 must be (replicas, sites)")
    R, L = eta.shape
    per_row_alpha = (alpha_rows.ndim == 2)
    times = np.asarray(sorted(snap_times), dtype=float)
    S = times.size
    horizon = float(times[-1])
    snaps = np.zeros((S, R, L), dtype=np.int16)
    acc = np.zeros((R, len(integrands)))

    if engine == "direct":
        bf, bt = tor.bond_from, tor.bond_to
        alpha_to = alpha_rows[:, bt] if per_row_alpha else alpha_rows[bt]
    else:
        if per_row_alpha:
            raise ValueError("ladder engine needs a shared environment")
        a = alpha_rows
        xb, yb = tor.unordered_bond_endpoints()
        ax_b = a[xb].astype(float)
        ay_b = a[yb].astype(float)
        counts = ax_b * ay_b
        cum_pairs = np.cumsum(counts)
        total_pairs = float(cum_pairs[-1])
        if not integrands:
            # compiled per-replica path; identical law, one shared stream
            snaps = np.zeros((S, R, L), dtype=np.int16)
            kernel_seed = int(rng.integers(2 ** 31 - 1))
            _ladder_kernel(eta, xb, yb, ax_b, ay_b, cum_pairs, times,
                           kernel_seed, snaps)
            return SepEnsemble(times=times, configs=snaps, integrals=acc)

    t = np.zeros(R)
    snap_idx = np.zeros(R, dtype=np.int64)
    active = snap_idx < S
    rows = np.arange(R)
    chunk, cursor = 16, 16  # pre-drawn randomness for the ladder branch

    while active.any():
        if engine == "direct":
            rates = eta[:, bf] * (alpha_to - eta[:, bt])
            total = rates.sum(axis=1).astype(float)
            with np.errstate(divide="ignore"):
                dt = np.where(total > 0,
                              rng.exponential(1.0, R) / np.maximum(total, 1),
                              np.inf)
        else:
            if cursor == chunk:
                dts = rng.exponential(1.0 / total_pairs, (chunk, R))
                us1 = rng.random((chunk, R))
                us2 = rng.random((chunk, R))
                cursor = 0
            dt, u1, u2 = dts[cursor], us1[cursor], us2[cursor]
            cursor += 1
        t_new = t + dt

        if integrands:
            dt_eff = np.clip(np.minimum(t_new, horizon) - t, 0.0, None)
            dt_eff[~active] = 0.0
            for k, f in enumerate(integrands):
                acc[:, k] += dt_eff * f(eta)

        next_due = times[min(int(snap_idx.min()), S - 1)]
        if np.where(active, t_new, -np.inf).max() >= next_due:
            while True:
                idx = np.minimum(snap_idx, S - 1)
                rec = active & (t_new >= times[idx]) & (snap_idx < S)
                if not rec.any():
                    break
                snaps[snap_idx[rec], rec] = eta[rec]
                snap_idx[rec] += 1
            active = snap_idx < S

        if engine == "direct":
            movers = active & (total > 0)
            if movers.any():
                u = rng.random(R)
                sel = rows[movers]
                r = rates[sel]
                cum = np.cumsum(r, axis=1)
                pick = (u[sel] * cum[:, -1])[:, None]
                b = np.minimum((cum < pick).sum(axis=1), r.shape[1] - 1)
                xs, ys = bf[b], bt[b]
                eta[sel, xs] -= 1
                eta[sel, ys] += 1
                t[sel] = t_new[sel]
        else:
            if active.all():
                sel = rows
            else:
                sel = rows[active]
                if sel.size == 0:
                    continue
            b = np.searchsorted(cum_pairs, u1[sel] * total_pairs,
                                side="right")
            b = np.minimum(b, counts.size - 1)
            xs, ys = xb[b], yb[b]
            ex = eta[sel, xs].astype(float)
            ey = eta[sel, ys].astype(float)
            w = counts[b]
            p_xy = ex * (ay_b[b] - ey) / w
            p_yx = ey * (ax_b[b] - ex) / w
            uu = u2[sel]
            delta = (uu < p_xy).astype(np.int64) \
                - ((uu >= p_xy) & (uu < p_xy + p_yx)).astype(np.int64)
            eta[sel, xs] -= delta
            eta[sel, ys] += delta
            t[sel] = t_new[sel]
    return SepEnsemble(times=times, configs=snaps, integrals=acc)


def sep_ensemble(env: Environment, eta0, snap_times, seed: int,
                 engine: str = "direct", integrands=()) -> SepEnsemble:
    """Evolve a block of replica configurations on one environment."""
    if engine not in ("direct", "ladder"):
        raise ValueError("engine must be 'direct' or 'ladder'")
    eta0 = np.atleast_2d(validate_config(env, eta0))
    rng = rng_from(seed, "sep_ensemble", engine)
    return _run_ensemble(env.alpha, env.dims, eta0, snap_times, rng, engine,
                         integrands)


def sep_ensemble_multi_env(alpha_rows: np.ndarray, dims, eta0, snap_times,
                           seed: int) -> SepEnsemble:
    """Direct-engine ensemble where every replica has its own environment row."""
    rng = rng_from(seed, "sep_ensemble_multi")
    return _run_ensemble(np.asarray(alpha_rows, dtype=np.int64), dims,
                         eta0, snap_times, rng, "direct")


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def binomial_config(env: Environment, profile, seed: int, N: int = None,
                    replicas: int = None) -> np.ndarray:
    """Independent Binomial(alpha_x, p_x) occupancies.

    ``profile`` is a scalar p in [0, 1] or a macroscopic profile evaluated
    at x/N (slowly varying product measure).
    """
    rng = rng_from(seed, "binomial_config")
    if np.isscalar(profile):
        p = float(profile)
        if not (0.0 <= p <= 1.0):
            raise ValueError("p must lie in [0, 1]")
        p_site = np.full(env.n_sites, p)
    else:
        if N is None:
            raise ValueError("a profile sampler needs the scale N")
        p_site = np.asarray(profile(env.torus.positions(scale=N)), dtype=float)
        if p_site.min() < 0 or p_site.max() > 1:
            raise ValueError("profile values must lie in [0, 1]")
    size = (replicas, env.n_sites) if replicas else env.n_sites
    return rng.binomial(env.alpha, p_site, size=size).astype(np.int64)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a residual-style verification."""

    name: str
    cases: int
    max_residual: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"name": self.name, "cases": self.cases,
                "max_residual": self.max_residual, "pass": self.passed,
                "detail": {k: v for k, v in self.detail.items()}}


def reversibility_check(env: Environment, p: float, samples: int,
                        seed: int, tol: float = 1e-10) -> CheckReport:
    """Detailed balance of the product-binomial measure under bond moves.

    For random (configuration, bond) pairs the identity
    nu_p(eta) rate(eta -> eta') = nu_p(eta') rate(eta' -> eta) is evaluated
    with the binomial masses computed numerically, so the comparison is not
    a rearrangement of itself.  Frozen moves (rate zero both ways) are
    trivially balanced and contribute zero residual.
    """
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie in (0, 1)")
    rng = rng_from(seed, "reversibility")
    tor = env.torus
    a = env.alpha
    etas = rng.binomial(a, p, size=(samples, env.n_sites)).astype(np.int64)
    bonds = rng.integers(0, tor.n_directed_bonds, size=samples)
    xs, ys = tor.bond_from[bonds], tor.bond_to[bonds]
    rows = np.arange(samples)
    ex, ey = etas[rows, xs], etas[rows, ys]
    ax, ay = a[xs], a[ys]

    forward = ex * (ay - ey)
    backward = (ey + 1) * (ax - ex + 1)
    movable = forward > 0
    ratio = np.ones(samples)
    m = movable
    ratio[m] = np.exp(
        stats.binom.logpmf(ex[m] - 1, ax[m], p)
        + stats.binom.logpmf(ey[m] + 1, ay[m], p)
        - stats.binom.logpmf(ex[m], ax[m], p)
        - stats.binom.logpmf(ey[m], ay[m], p))
    resid = np.zeros(samples)
    resid[m] = np.abs(forward[m] - ratio[m] * backward[m]) / forward[m]
    worst = float(resid.max()) if samples else 0.0
    return CheckReport(name="binomial_reversibility", cases=int(samples),
                       max_residual=worst, passed=worst <= tol,
                       detail={"p": p, "movable_cases": int(m.sum())})


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualityReport:
    """Maximal residual of a generator-identity check over several cases."""

    max_abs_residual: float
    cases: int
    worst_case: tuple
    passed: bool

    def to_json_dict(self) -> dict:
        return {"name": "duality", "cases": self.cases,
                "max_residual": self.max_abs_residual, "pass": self.passed,
                "worst_case": [str(w) for w in self.worst_case]}


def walk_action_on_density(env: Environment, eta, x: int) -> float:
    """One-walker generator applied to y -> eta(y)/alpha_y, evaluated at x."""
    nbr = env.torus.neighbors[x]
    a = env.alpha
    return float(np.sum(eta[nbr] - a[nbr] * (eta[x] / a[x])))


def sep_action_on_observable(env: Environment, eta, observable) -> float:
    """Exclusion generator applied to an observable by literal enumeration.

    Sums rate(eta -> eta^{x,y}) (observable(eta^{x,y}) - observable(eta))
    over every directed bond, using `apply_move` for the updated
    configuration; blocked moves contribute zero rate.
    """
    eta = validate_config(env, eta)
    tor = env.torus
    a = env.alpha
    base = observable(eta)
    out = 0.0
    for b in range(tor.n_directed_bonds):
        x, y = int(tor.bond_from[b]), int(tor.bond_to[b])
        rate = int(eta[x]) * int(a[y] - eta[y])
        if rate > 0:
            moved = eta.copy()
            moved[x] -= 1
            moved[y] += 1
            out += rate * (observable(moved) - base)
    return out


def duality_check(env: Environment, eta, x: int) -> DualityReport:
    """Residual of the one-walker duality identity at site x.

    The walk side is the closed-form neighbor sum; the particle side applies
    the exclusion generator literally to eta -> eta(x)/alpha_x.
    """
    eta = validate_config(env, eta)
    lhs = walk_action_on_density(env, eta, x)
    rhs = sep_action_on_observable(env, eta,
                                   lambda cfg: cfg[x] / env.alpha[x])
    resid = abs(lhs - rhs)
    return DualityReport(max_abs_residual=resid, cases=1,
                         worst_case=(env.content_hash(),
                                     hash(eta.tobytes()), x),
                         passed=resid <= 1e-12)


def duality_function(env: Environment, xi, eta) -> float:
    """Product self-duality observable with the occupancy-ordering indicator."""
    xi = validate_config(env, xi)
    eta = np.asarray(eta, dtype=np.int64)
    if np.any(xi > eta):
        return 0.0
    val = 1.0
    for x in np.nonzero(xi)[0]:
        k = int(xi[x])
        num = 1.0
        den = 1.0
        for i in range(k):
            num *= eta[x] - i
            den *= env.alpha[x] - i
        val *= num / den
    return val


def multi_duality_check(env: Environment, xi, eta) -> DualityReport:
    """Residual of the many-walker self-duality identity.

    Both generator actions are evaluated by exhaustive enumeration of moves
    from the finite configuration xi and from eta.
    """
    xi = validate_config(env, xi)
    eta = validate_config(env, eta)
    if xi.sum() > MAX_DUAL_PARTICLES:
        raise ValueError(
            f"dual configurations are capped at {MAX_DUAL_PARTICLES} particles")
    lhs = sep_action_on_observable(env, xi,
                                   lambda cfg: duality_function(env, cfg, eta))
    rhs = sep_action_on_observable(env, eta,
                                   lambda cfg: duality_function(env, xi, cfg))
    resid = abs(lhs - rhs)
    return DualityReport(max_abs_residual=resid, cases=1,
                         worst_case=(env.content_hash(), hash(xi.tobytes()),
                                     hash(eta.tobytes())),
                         passed=resid <= 1e-12)


def duality_suite(env_seeds, dims_list, cases_per_env: int, seed: int,
                  dual_particles: int = 1, law=None) -> DualityReport:
    """Randomized duality residual sweep over environments and configurations."""
    from .environment import iid_law, sample_environment
    law = law or iid_law((1, 2, 3))
    worst = (0.0, None)
    cases = 0
    for e_i, env_seed in enumerate(env_seeds):
        for dims in dims_list:
            env = sample_environment(law, dims, env_seed)
            rng = rng_from(seed, "duality_suite", e_i, tuple(dims))
            for c in range(cases_per_env):
                eta = rng.integers(0, env.alpha + 1)
                if dual_particles == 1:
                    x = int(rng.integers(env.n_sites))
                    rep = duality_check(env, eta, x)
                    key = (env.content_hash(), c, x)
                else:
                    xi = np.zeros(env.n_sites, dtype=np.int64)
                    placed = 0
                    while placed < dual_particles:
                        x = int(rng.integers(env.n_sites))
                        if xi[x] < env.alpha[x]:
                            xi[x] += 1
                            placed += 1
                    rep = multi_duality_check(env, xi, eta)
                    key = (env.content_hash(), c, "multi")
                cases += 1
                if rep.max_abs_residual > worst[0]:
                    worst = (rep.max_abs_residual, key)
    return DualityReport(max_abs_residual=worst[0], cases=cases,
                         worst_case=worst[1] or ("", 0, 0),
                         passed=worst[0] <= 1e-12)


# ---------------------------------------------------------------------------
# mild solution and martingale structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationReport:
    """Standardized deviations of Monte Carlo estimates from exact targets."""

    name: str
    max_abs_z: float
    z_table: dict
    replicas: int
    passed: bool

    def to_json_dict(self) -> dict:
        return {"name": self.name, "max_abs_z": self.max_abs_z,
                "replicas": self.replicas, "pass": self.passed,
                "z_table": {str(k): v for k, v in self.z_table.items()}}


def mean_density_evolution_check(env: Environment, eta0, t_grid,
                                 replicas: int, seed: int,
                                 z_cap: float = 4.0,
                                 engine: str = "direct") -> DeviationReport:
    """Monte Carlo mean of eta_t(x)/alpha_x against the exact semigroup.

    The martingale term in the mild representation is mean zero, so the
    replica average of the density ratio must match the one-walker semigroup
    applied to the initial ratio, within Monte Carlo error.
    """
    if env.n_sites > DENSE_SITE_CAP:
        raise ValueError("semigroup comparison capped at 4096 sites")
    eta0 = validate_config(env, eta0)
    t_grid = sorted(float(t) for t in t_grid)
    block = np.repeat(eta0[None, :], replicas, axis=0)
    ens = sep_ensemble(env, block, t_grid, seed, engine=engine)
    gen = generator(env, "alpha_walk")
    exact = semigroup_action_grid(gen, density_ratio(env, eta0), t_grid)

    a = env.alpha.astype(float)
    z_table = {}
    worst = 0.0
    for s, t in enumerate(t_grid):
        ratios = ens.configs[s] / a
        m = ratios.mean(axis=0)
        sd = ratios.std(axis=0, ddof=1)
        target = np.clip(exact[s], 0.0, 1.0)
        # ratios live in [0, 1]: the target implies a variance floor, which
        # keeps sites that no replica ever reached from producing fake
        # infinite deviations when the exact mean is tiny but positive
        floor = np.sqrt(target * (1.0 - target) / replicas)
        stderr = np.maximum(sd / np.sqrt(replicas), floor)
        diff = m - exact[s]
        z = np.zeros_like(diff)
        nz = stderr > 0
        z[nz] = diff[nz] / stderr[nz]
        z[~nz] = np.where(np.abs(diff[~nz]) < 1e-8, 0.0, np.inf)
        z_table[t] = float(np.abs(z).max())
        worst = max(worst, z_table[t])
    return DeviationReport(name="mild_solution_mean", max_abs_z=worst,
                           z_table=z_table, replicas=replicas,
                           passed=worst <= z_cap)


def ladder_direct_equivalence_check(env: Environment, eta0, t: float,
                                    replicas: int, seed: int,
                                    z_cap: float = 3.0) -> DeviationReport:
    """Per-site marginal means of the two constructions must agree.

    The direct event-driven chain and the projected stirring lift realize
    the same Markov process; their replica means at time t are compared
    site by site in units of the combined Monte Carlo error.
    """
    eta0 = validate_config(env, eta0)
    block = np.repeat(eta0[None, :], replicas, axis=0)
    e_direct = sep_ensemble(env, block, [float(t)],
                            derive_seed(seed, "direct"), engine="direct")
    e_ladder = sep_ensemble(env, block, [float(t)],
                            derive_seed(seed, "ladder"), engine="ladder")
    a = e_direct.configs[0].astype(float)
    b = e_ladder.configs[0].astype(float)
    diff = a.mean(axis=0) - b.mean(axis=0)
    se = np.sqrt(a.var(axis=0, ddof=1) / replicas
                 + b.var(axis=0, ddof=1) / replicas)
    z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), 0.0)
    worst = float(np.abs(z).max())
    return DeviationReport(name="ladder_vs_direct", max_abs_z=worst,
                           z_table={int(i): float(v) for i, v in enumerate(z)},
                           replicas=replicas, passed=worst <= z_cap)


def single_particle_equivalence_check(env: Environment, x0: int, t: float,
                                      replicas: int, seed: int) -> float:
    """Chi-square p-value: one exclusion particle against the plain walk.

    With a single particle the exclusion dynamics has no interaction, so
    the site histogram at time t must match the occupancy walk's.
    """
    from .random_walk import walk_ensemble
    from .stat import two_sample_chisquare
    eta0 = np.zeros(env.n_sites, dtype=np.int64)
    eta0[x0] = 1
    block = np.repeat(eta0[None, :], replicas, axis=0)
    ens = sep_ensemble(env, block, [float(t)], derive_seed(seed, "sep"))
    sep_sites = np.argmax(ens.configs[0], axis=1)
    walk = walk_ensemble(env, "alpha_walk", x0, [float(t)], replicas,
                         derive_seed(seed, "walk"))
    ha = np.bincount(sep_sites, minlength=env.n_sites)
    hb = np.bincount(walk.sites[0], minlength=env.n_sites)
    _, _, p = two_sample_chisquare(ha, hb)
    return p


def covariation_integrand(env: Environment, x: int, y: int):
    """Pathwise density of the predictable covariation of the occupation
    martingales at adjacent sites (without the overall minus sign).

    Derived from the ladder construction: every level pair across the bond
    carries an independent rate-1 clock and contributes when its occupancies
    differ, which counts eta(x)(alpha_y - eta(y)) + eta(y)(alpha_x - eta(x))
    ordered pairs, normalized by alpha_x alpha_y from the projection weights.
    The closed form equals the carre-du-champ of the two density ratios under
    the exclusion generator.
    """
    ax, ay = float(env.alpha[x]), float(env.alpha[y])

    def f(eta):
        ex = eta[..., x].astype(float)
        ey = eta[..., y].astype(float)
        return (ex * (ay - ey) + ey * (ax - ex)) / (ax * ay)

    return f


def variance_integrand(env: Environment, x: int):
    """Pathwise density of the predictable quadratic variation of M(x):
    the neighbor sum of ordered differing level pairs over alpha_x squared."""
    nbr = env.torus.neighbors[x]
    ax = float(env.alpha[x])
    ay = env.alpha[nbr].astype(float)

    def f(eta):
        ex = eta[..., x, None].astype(float)
        ey = eta[..., nbr].astype(float)
        return ((ex * (ay - ey) + ey * (ax - ex)) / (ax * ax)).sum(axis=-1)

    return f


def drift_integrand(env: Environment, x: int):
    """Walk generator applied to the density ratio field, at site x."""
    nbr = env.torus.neighbors[x]
    a = env.alpha
    ratio = (a[nbr] / a[x]).astype(float)

    def f(eta):
        return (eta[..., nbr].astype(float)
                - ratio * eta[..., x, None].astype(float)).sum(axis=-1)

    return f


def martingale_covariation_check(env: Environment, eta0, pairs, t: float,
                                 replicas: int, seed: int,
                                 z_cap: float = 4.0) -> DeviationReport:
    """Covariance structure of the reconstructed occupation martingales.

    Along each replica the martingale M_t(x) = eta_t(x)/alpha_x -
    eta_0(x)/alpha_x - int_0^t (walk drift) ds is rebuilt with the drift
    integral evaluated exactly between events.  For every requested pair the
    product M_t(x) M_t(y) minus the pathwise predictable covariation must be
    mean zero; non-adjacent pairs have zero covariation.  Per-site means and
    variances are checked the same way.
    """
    eta0 = validate_config(env, eta0)
    tor = env.torus
    sites = sorted({s for p in pairs for s in p})
    site_pos = {s: k for k, s in enumerate(sites)}
    integrands = [drift_integrand(env, s) for s in sites]
    pair_info = []
    for (x, y) in pairs:
        if x == y:
            pair_info.append((x, y, len(integrands), "var"))
            integrands.append(variance_integrand(env, x))
        elif y in tor.neighbors[x]:
            pair_info.append((x, y, len(integrands), "adj"))
            integrands.append(covariation_integrand(env, x, y))
        else:
            pair_info.append((x, y, None, "far"))

    block = np.repeat(eta0[None, :], replicas, axis=0)
    ens = sep_ensemble(env, block, [float(t)], seed, integrands=integrands)
    a = env.alpha.astype(float)
    final = ens.configs[0].astype(float)

    M = {}
    for s in sites:
        k = site_pos[s]
        M[s] = (final[:, s] - eta0[s]) / a[s] - ens.integrals[:, k]

    def z_of(values):
        sd = values.std(ddof=1)
        if sd == 0:
            return 0.0 if abs(values.mean()) < 1e-12 else np.inf
        return float(values.mean() / (sd / np.sqrt(replicas)))

    z_table = {}
    worst = 0.0
    for (x, y, k_cov, tag) in pair_info:
        prod = M[x] * M[y]
        if tag == "adj":
            # off-diagonal predictable covariation is minus the integral
            u = prod + ens.integrals[:, k_cov]
        elif tag == "var":
            u = prod - ens.integrals[:, k_cov]
        else:
            u = prod
        label = f"cov({x},{y})|{tag}"
        z_table[label] = z_of(u)
        worst = max(worst, abs(z_table[label]))
    for s in sites:
        z_table[f"mean({s})"] = z_of(M[s])
        worst = max(worst, abs(z_table[f"mean({s})"]))
    return DeviationReport(name="martingale_covariation", max_abs_z=worst,
                           z_table=z_table, replicas=replicas,
                           passed=worst <= z_cap)
