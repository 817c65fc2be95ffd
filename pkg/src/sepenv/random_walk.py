"""Single random walks: the occupancy-weighted walk and its conductance twin.

The occupancy walk jumps from x to a neighbor y at rate alpha_y; the
conductance walk jumps at rate omega_xy = alpha_x alpha_y.  The two are
related by the random time change R(t) = int_0^t alpha_{X_s} ds.  Exact
finite-torus semigroups are computed by uniformization (Poisson-weighted
powers of the jump kernel) with an error-controlled truncation, or by dense
scaling-and-squaring for cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .environment import Environment
from .seeding import derive_seed, rng_from

WALK_KINDS = ("alpha_walk", "omega_walk")
DENSE_SITE_CAP = 4096


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse nearest-neighbor generator with integer off-diagonal rates.

    ``off_rates[x, j]`` is the rate q(x, neighbors[x, j]); the diagonal is
    minus the row sum, so rows sum to zero exactly in integer arithmetic.
    ``measure`` is the reversibility weight vector m with
    m_x q(x, y) = m_y q(y, x).
    """

    size: int
    kind: str
    neighbors: np.ndarray     # (size, 2d) int64
    off_rates: np.ndarray     # (size, 2d) int64
    measure: np.ndarray       # (size,) int64
    env: Environment = field(repr=False, default=None)

    @property
    def exit_rates(self) -> np.ndarray:
        return self.off_rates.sum(axis=1)

    def max_exit_rate(self) -> int:
        return int(self.exit_rates.max())

    def row_sums(self) -> np.ndarray:
        """Integer row sums including the diagonal (exactly zero)."""
        return self.off_rates.sum(axis=1) - self.exit_rates

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.size, self.size), dtype=float)
        rows = np.repeat(np.arange(self.size), self.neighbors.shape[1])
        # accumulate: multigraph edges on side-2 tori add up
        np.add.at(A, (rows, self.neighbors.reshape(-1)),
                  self.off_rates.reshape(-1).astype(float))
        A[np.arange(self.size), np.arange(self.size)] -= self.exit_rates
        return A

    def apply(self, v: np.ndarray) -> np.ndarray:
        """A @ v for a vector or a (size, k) block of columns."""
        out = -self.exit_rates.reshape(-1, *([1] * (v.ndim - 1))) * v
        for j in range(self.neighbors.shape[1]):
            out = out + self.off_rates[:, j].reshape(
                -1, *([1] * (v.ndim - 1))) * v[self.neighbors[:, j]]
        return out


def generator(env: Environment, kind: str) -> GeneratorMatrix:
    if kind not in WALK_KINDS:
        raise ValueError(f"kind must be one of {WALK_KINDS}")
    tor = env.torus
    a = env.alpha
    to_alpha = a[tor.neighbors]                       # (n, 2d)
    if kind == "alpha_walk":
        rates = to_alpha.copy()
        measure = a.copy()
    else:
        rates = a[:, None] * to_alpha
        measure = np.ones(tor.n_sites, dtype=np.int64)
    return GeneratorMatrix(size=tor.n_sites, kind=kind,
                           neighbors=tor.neighbors, off_rates=rates,
                           measure=measure, env=env)


def holding_rate(env: Environment, x: int, kind: str = "alpha_walk") -> float:
    """Total exit rate at x: sum of neighbor occupancies, times alpha_x for
    the conductance walk."""
    lam = int(env.alpha[env.torus.neighbors[x]].sum())
    if kind == "omega_walk":
        lam *= int(env.alpha[x])
    elif kind != "alpha_walk":
        raise ValueError(f"kind must be one of {WALK_KINDS}")
    return float(lam)


def jump_distribution(env: Environment, x: int,
                      kind: str = "alpha_walk") -> np.ndarray:
    """Jump probabilities over the neighbor slots of x.

    Identical for both walk kinds: the conductance walk's alpha_x factor
    cancels between rate and holding time.
    """
    if kind not in WALK_KINDS:
        raise ValueError(f"kind must be one of {WALK_KINDS}")
    w = env.alpha[env.torus.neighbors[x]].astype(float)
    return w / w.sum()


# ---------------------------------------------------------------------------
# semigroups by uniformization
# ---------------------------------------------------------------------------

def _poisson_window(mu: float, tol: float):
    """Index window and weights covering all but <= tol of Poisson(mu)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mu == 0.0:
        return 0, 0, np.array([1.0])
    if mu < 25.0:
        k_lo = 0
    else:
        k_lo = max(0, int(stats.poisson.ppf(tol / 4.0, mu)) - 2)
    k_hi = int(stats.poisson.ppf(1.0 - tol / 4.0, mu)) + 2
    ks = np.arange(k_lo, k_hi + 1)
    w = np.exp(stats.poisson.logpmf(ks, mu))
    # renormalize so the truncated mixture is exactly a convex combination:
    # kernel powers are stochastic, hence rows of the result sum to one
    return k_lo, k_hi, w / w.sum()


def _uniformized(gen: GeneratorMatrix, V: np.ndarray, t: float, tol: float):
    """exp(tA) applied to columns of V by Poisson-weighted kernel powers."""
    if t < 0:
        raise ValueError("t must be non-negative")
    lam = float(gen.max_exit_rate())
    mu = lam * t
    if mu == 0.0:
        return V.astype(float).copy()
    k_lo, k_hi, w = _poisson_window(mu, tol)
    diag = 1.0 - gen.exit_rates / lam
    probs = gen.off_rates / lam
    shape_tail = ([1] * (V.ndim - 1))
    diag = diag.reshape(-1, *shape_tail)

    cur = V.astype(float).copy()
    acc = w[0] * cur if k_lo == 0 else np.zeros_like(cur, dtype=float)
    for k in range(1, k_hi + 1):
        nxt = diag * cur
        for j in range(gen.neighbors.shape[1]):
            nxt += probs[:, j].reshape(-1, *shape_tail) * cur[gen.neighbors[:, j]]
        cur = nxt
        if k >= k_lo:
            acc += w[k - k_lo] * cur
    return acc


@dataclass(frozen=True)
class SemigroupTable:
    """Dense transition probabilities p_t(x, y) with their tolerance."""

    t: float
    p: np.ndarray
    method: str
    tol: float
    measure: np.ndarray = field(repr=False, default=None)

    def row_sum_residual(self) -> float:
        return float(np.abs(self.p.sum(axis=1) - 1.0).max())

    def reversibility_residual(self) -> float:
        m = self.measure.astype(float)
        w = m[:, None] * self.p
        return float(np.abs(w - w.T).max())

    def to_csv_rows(self):
        """Dense export with a {t, size, tol} header line."""
        yield (f"# t={self.t!r}", f"size={self.p.shape[0]}",
               f"tol={self.tol!r}", f"method={self.method}")
        yield ("from_site", "to_site", "probability")
        for x in range(self.p.shape[0]):
            for y in range(self.p.shape[1]):
                yield (x, y, repr(float(self.p[x, y])))

    def save_npz(self, path):
        np.savez_compressed(path, t=self.t, size=self.p.shape[0],
                            tol=self.tol, method=self.method, p=self.p)
        return path


def semigroup(gen: GeneratorMatrix, t: float, tol: float = 1e-10,
              method: str = "uniformization") -> SemigroupTable:
    """Dense p_t = exp(tA), row-stochastic within 10 * tol.

    Entries falling outside [0, 1] by less than ``tol`` are clamped.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if gen.size > DENSE_SITE_CAP:
        raise ValueError(
            f"dense semigroup capped at {DENSE_SITE_CAP} sites; "
            "use semigroup_action for larger tori")
    if method == "uniformization":
        p = _uniformized(gen, np.eye(gen.size), t, tol)
    elif method == "scaling_squaring":
        p = sla.expm(t * gen.to_dense())
    else:
        raise ValueError("method must be 'uniformization' or 'scaling_squaring'")
    if p.min() < -tol or p.max() > 1.0 + tol:
        raise ArithmeticError("semigroup entries out of tolerance bounds")
    p = np.clip(p, 0.0, 1.0)
    return SemigroupTable(t=float(t), p=p, method=method, tol=tol,
                          measure=gen.measure)


def semigroup_action(gen: GeneratorMatrix, v: np.ndarray, t: float,
                     tol: float = 1e-10) -> np.ndarray:
    """exp(tA) v without forming the dense matrix."""
    return _uniformized(gen, np.asarray(v, dtype=float), t, tol)


def semigroup_action_grid(gen: GeneratorMatrix, v: np.ndarray, times,
                          tol: float = 1e-10) -> list:
    """exp(t_i A) v for an increasing grid, applied incrementally."""
    times = list(times)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be non-decreasing and non-negative")
    out = []
    cur = np.asarray(v, dtype=float)
    prev = 0.0
    for t in times:
        cur = _uniformized(gen, cur, t - prev, tol)
        prev = t
        out.append(cur.copy())
    return out


def transition_row(gen: GeneratorMatrix, x: int, t: float,
                   tol: float = 1e-10) -> np.ndarray:
    """p_t(x, .) via one vector action and detailed balance.

    exp(tA) delta_x gives the column p_t(., x); the reversibility weights m
    turn it into the row: p_t(x, y) = m_y p_t(y, x) / m_x.
    """
    delta = np.zeros(gen.size)
    delta[x] = 1.0
    col = semigroup_action(gen, delta, t, tol)
    m = gen.measure.astype(float)
    return m * col / m[x]


# ---------------------------------------------------------------------------
# heat kernel and bound diagnostics
# ---------------------------------------------------------------------------

def heat_kernel(env: Environment, t: float, x: int, y: int,
                tol: float = 1e-10) -> float:
    """q_t(x, y) = p_t(x, y) / alpha_y for the occupancy walk (symmetric)."""
    gen = generator(env, "alpha_walk")
    row = transition_row(gen, x, t, tol)
    return float(row[y] / env.alpha[y])


@dataclass(frozen=True)
class BoundReport:
    """Smallest constant c with p_t(x,y) <= c envelope(t, dist(x,y)) on a grid."""

    c_fit: float
    witness: tuple          # (t, x, y) where the ratio peaks
    t_grid: tuple
    per_t_max: tuple        # max ratio per grid time

    def passes(self, c_cap: float) -> bool:
        return self.c_fit <= c_cap


def heat_kernel_bound_check(env: Environment, t_grid,
                            tol: float = 1e-10) -> BoundReport:
    """Fit c in p_t(x,y) <= c (1 v sqrt(t^d))^{-1} exp(-dist(x,y)/(1 v sqrt t)).

    Distances use the minimal-image convention on the torus.  The fitted
    constant is reported with the argmax witness; no universal numeric value
    is asserted.
    """
    tor = env.torus
    gen = generator(env, "alpha_walk")
    d = tor.ndim
    all_sites = np.arange(tor.n_sites)
    per_t = []
    best = (-np.inf, None)
    for t in t_grid:
        if t <= 0:
            raise ValueError("bound check requires t > 0")
        tab = semigroup(gen, t, tol).p if tor.n_sites <= DENSE_SITE_CAP else None
        scale = max(1.0, float(t) ** (d / 2.0))
        ell = max(1.0, float(np.sqrt(t)))
        t_best = -np.inf
        for x in range(tor.n_sites):
            row = tab[x] if tab is not None else transition_row(gen, x, t, tol)
            dist = tor.torus_distance(np.full(tor.n_sites, x), all_sites)
            ratio = row * scale * np.exp(dist / ell)
            k = int(np.argmax(ratio))
            if ratio[k] > t_best:
                t_best = float(ratio[k])
            if ratio[k] > best[0]:
                best = (float(ratio[k]), (float(t), x, k))
        per_t.append(t_best)
    return BoundReport(c_fit=best[0], witness=best[1],
                       t_grid=tuple(float(t) for t in t_grid),
                       per_t_max=tuple(per_t))


# ---------------------------------------------------------------------------
# Dirichlet form and Nash functional
# ---------------------------------------------------------------------------

def dirichlet_form(env: Environment, f) -> float:
    """(1/2) sum_x sum_{y~x} alpha_x alpha_y (f(y) - f(x))^2."""
    f = np.asarray(f, dtype=float)
    tor = env.torus
    a = env.alpha.astype(float)
    total = 0.0
    for j in range(tor.n_directions):
        nb = tor.neighbors[:, j]
        total += float(np.sum(a * a[nb] * (f[nb] - f) ** 2))
    return 0.5 * total


def nash_ratio(env: Environment, f) -> float:
    """Dirichlet form over ||f||_{l2(alpha)}^{2+4/d} ||f||_{l1(alpha)}^{-4/d}."""
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        raise ValueError("nash_ratio requires a nonzero function")
    d = env.ndim
    a = env.alpha.astype(float)
    l2 = np.sqrt(np.sum(f ** 2 * a))
    l1 = np.sum(np.abs(f) * a)
    return dirichlet_form(env, f) / (l2 ** (2.0 + 4.0 / d) * l1 ** (-4.0 / d))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Event-time record of a continuous-time nearest-neighbor walk."""

    start: int
    times: np.ndarray
    sites: np.ndarray
    horizon: float
    kind: str = "alpha_walk"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.sites, dtype=np.int64)
        if t.shape != s.shape:
            raise ValueError("times and sites must align")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] <= 0
                       or t[-1] > self.horizon):
            raise ValueError("event times must be strictly increasing in "
                             "(0, horizon]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sites", s)

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    def site_at(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right"))
        return int(self.start if k == 0 else self.sites[k - 1])

    def validate_neighbors(self, env: Environment) -> bool:
        prev = self.start
        for s in self.sites:
            if not env.torus.are_neighbors(prev, int(s)):
                return False
            prev = int(s)
        return True

    def to_csv_rows(self, replica: int = 0):
        for i, (t, s) in enumerate(zip(self.times, self.sites)):
            yield replica, i, float(t), int(s)


def simulate_walk(env: Environment, kind: str, x0: int, horizon: float,
                  seed: int) -> Trajectory:
    """Event-driven (Gillespie) simulation of a single walker."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if kind not in WALK_KINDS:
        raise ValueError(f"kind must be one of {WALK_KINDS}")
    rng = rng_from(seed, "walk", kind, int(x0))
    tor = env.torus
    a = env.alpha
    nbr = tor.neighbors
    lam_alpha = a[nbr].sum(axis=1).astype(float)
    lam = lam_alpha * a if kind == "omega_walk" else lam_alpha
    cum = np.cumsum(a[nbr].astype(float), axis=1)

    t, x = 0.0, int(x0)
    times, sites = [], []
    while True:
        t += rng.exponential(1.0 / lam[x])
        if t > horizon:
            break
        j = int(np.searchsorted(cum[x], rng.random() * cum[x][-1], side="right"))
        j = min(j, nbr.shape[1] - 1)
        x = int(nbr[x, j])
        times.append(t)
        sites.append(x)
    return Trajectory(start=int(x0), times=np.array(times),
                      sites=np.array(sites, dtype=np.int64),
                      horizon=float(horizon), kind=kind)


def time_change(traj: Trajectory, env: Environment) -> Trajectory:
    """Reparameterize a conductance-walk path by R(t) = int alpha_{X_s} ds.

    R is piecewise linear between events, so the change is exact: the k-th
    event moves from tau_k to R(tau_k) and the horizon to R(horizon).
    """
    if traj.kind != "omega_walk":
        raise ValueError("time change applies to conductance-walk paths")
    t = np.asarray(traj.times, dtype=float)
    if t.size and np.any(np.diff(t) <= 0):
        raise ValueError("event times must be strictly increasing")
    a = env.alpha.astype(float)
    occupied = np.concatenate(([traj.start], traj.sites[:-1])) if t.size \
        else np.array([], dtype=np.int64)
    gaps = np.diff(np.concatenate(([0.0], t)))
    new_times = np.cumsum(a[occupied] * gaps) if t.size else t
    tail_site = int(traj.sites[-1]) if t.size else traj.start
    last_t = float(t[-1]) if t.size else 0.0
    new_horizon = (new_times[-1] if t.size else 0.0) \
        + a[tail_site] * (traj.horizon - last_t)
    return Trajectory(start=traj.start, times=new_times, sites=traj.sites,
                      horizon=float(new_horizon), kind="alpha_walk")


# ---------------------------------------------------------------------------
# replica ensembles (vectorized across independent walkers)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkEnsemble:
    """Snapshots of independent walkers at common clock times."""

    times: np.ndarray          # (S,)
    sites: np.ndarray          # (S, R)
    displacement: np.ndarray   # (S, R, d) unwrapped lattice steps
    jump_counts: np.ndarray    # (R,) jumps made by the final time


def walk_ensemble(env: Environment, kind: str, x0: int, times, replicas: int,
                  seed: int, clock: str = "process") -> WalkEnsemble:
    """Simulate ``replicas`` independent walkers, recording snapshots.

    ``clock="process"`` records states at the given process times.
    ``clock="timechanged"`` (conductance walk only) records states at the
    times R^{-1}(times), i.e. it samples the time-changed walk; since
    alpha >= 1 guarantees R(t) >= t, running to the last target suffices.
    """
    times = np.asarray(sorted(times), dtype=float)
    if times.size == 0 or times[0] < 0:
        raise ValueError("need non-negative snapshot times")
    if clock not in ("process", "timechanged"):
        raise ValueError("clock must be 'process' or 'timechanged'")
    if clock == "timechanged" and kind != "omega_walk":
        raise ValueError("the time change applies to the conductance walk")
    if kind not in WALK_KINDS:
        raise ValueError(f"kind must be one of {WALK_KINDS}")

    rng = rng_from(seed, "walk_ensemble", kind, clock)
    tor = env.torus
    a = env.alpha
    nbr = tor.neighbors
    lam_alpha = a[nbr].sum(axis=1).astype(float)
    lam = lam_alpha * a if kind == "omega_walk" else lam_alpha
    cum_jump = np.cumsum(a[nbr].astype(float), axis=1)
    steps = np.zeros((tor.n_directions, tor.ndim), dtype=np.int32)
    for axis in range(tor.ndim):
        steps[2 * axis, axis] = 1
        steps[2 * axis + 1, axis] = -1

    R = int(replicas)
    S = times.size
    if np.isscalar(x0) or np.ndim(x0) == 0:
        pos = np.full(R, int(x0), dtype=np.int64)
    else:
        pos = np.asarray(x0, dtype=np.int64).copy()
        if pos.shape != (R,):
            raise ValueError("x0 must be a site or one site per replica")
    disp = np.zeros((R, tor.ndim), dtype=np.int64)
    t = np.zeros(R)
    racc = np.zeros(R)  # accumulated R(t) for the timechanged clock
    snap_idx = np.zeros(R, dtype=np.int64)
    jumps = np.zeros(R, dtype=np.int64)
    out_sites = np.zeros((S, R), dtype=np.int64)
    out_disp = np.zeros((S, R, tor.ndim), dtype=np.int64)
    horizon = float(times[-1])

    active = snap_idx < S
    while active.any():
        dt = rng.exponential(1.0, R) / lam[pos]
        u = rng.random(R)
        t_new = t + dt
        clockv_new = racc + a[pos] * dt if clock == "timechanged" else t_new
        # record every snapshot time crossed inside this holding interval
        while True:
            idx = np.minimum(snap_idx, S - 1)
            rec = active & (clockv_new >= times[idx]) & (snap_idx < S)
            if not rec.any():
                break
            out_sites[snap_idx[rec], rec] = pos[rec]
            out_disp[snap_idx[rec], rec] = disp[rec]
            snap_idx[rec] += 1
        active = snap_idx < S
        move = active
        jumps[active & (t_new <= horizon)] += 1
        if move.any():
            sel = np.where(move)[0]
            cm = cum_jump[pos[sel]]
            slot = (cm < (u[sel] * cm[:, -1])[:, None]).sum(axis=1)
            slot = np.minimum(slot, tor.n_directions - 1)
            if clock == "timechanged":
                racc[sel] = racc[sel] + a[pos[sel]] * dt[sel]
            pos[sel] = nbr[pos[sel], slot]
            disp[sel] += steps[slot]
            t[sel] = t_new[sel]
    return WalkEnsemble(times=times, sites=out_sites, displacement=out_disp,
                        jump_counts=jumps)


def time_change_equivalence_check(env: Environment, x0: int, times,
                                  replicas: int, seed: int) -> dict:
    """Chi-square p-values comparing site histograms of the time-changed
    conductance walk against the occupancy walk at each requested time.

    The two processes agree in law, so under correct simulation and time
    change the test must not reject.
    """
    from .stat import two_sample_chisquare
    direct = walk_ensemble(env, "alpha_walk", x0, times, replicas,
                           derive_seed(seed, "direct"))
    changed = walk_ensemble(env, "omega_walk", x0, times, replicas,
                            derive_seed(seed, "timechange"),
                            clock="timechanged")
    out = {}
    for s, t in enumerate(direct.times):
        ha = np.bincount(direct.sites[s], minlength=env.n_sites)
        hb = np.bincount(changed.sites[s], minlength=env.n_sites)
        stat, dof, p = two_sample_chisquare(ha, hb)
        out[float(t)] = p
    return out
