"""Quenched environments of site-dependent maximal occupancies.

An environment assigns to every torus site an integer ``alpha`` in
``[1, c_max]`` (uniform ellipticity).  Environments are sampled from a law
descriptor, are immutable after construction, regenerate bit-for-bit from
``(law, dims, seed)``, and induce the bond conductance field
``omega_xy = alpha_x * alpha_y``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import Torus, torus
from .seeding import rng_from

_WEIGHT_TOL = 1e-12
_STATIONARY_TOL = 1e-10


@dataclass(frozen=True)
class EnvLaw:
    """Law of the occupancy field.

    kind
        ``"iid"``: occupancies drawn independently from ``(support, weights)``.
        ``"markov_chain_1d_product"``: stationary Markov chain with matrix
        ``transition`` along the first axis, independent across the remaining
        axes (a cheap stationary, ergodic, non-i.i.d. law).
        ``"constant"``: single-value support.
    """

    kind: str
    support: tuple
    weights: tuple
    transition: tuple = None  # row-major tuple of tuples, markov kind only

    def __post_init__(self):
        if self.kind not in ("iid", "markov_chain_1d_product", "constant"):
            raise ValueError(f"unknown law kind {self.kind!r}")
        support = tuple(int(v) for v in self.support)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        if len(support) != len(weights) or len(support) == 0:
            raise ValueError("support and weights must be equal nonzero length")
        if any(v < 1 for v in support):
            raise ValueError(f"support values must be >= 1, got {support}")
        if len(set(support)) != len(support):
            raise ValueError("support values must be distinct")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(weights) - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {sum(weights)!r}, not 1")
        if self.kind == "constant" and len(support) != 1:
            raise ValueError("constant law needs a single support value")
        if self.kind == "markov_chain_1d_product":
            if self.transition is None:
                raise ValueError("markov law requires a transition matrix")
            T = np.asarray(self.transition, dtype=float)
            if T.shape != (len(support), len(support)):
                raise ValueError("transition shape must match support")
            if np.any(T < 0) or np.max(np.abs(T.sum(axis=1) - 1.0)) > _WEIGHT_TOL:
                raise ValueError("transition rows must be probability vectors")
            w = np.asarray(weights)
            if np.max(np.abs(w @ T - w)) > _STATIONARY_TOL:
                raise ValueError("weights must be the stationary vector of transition")
            object.__setattr__(
                self, "transition", tuple(tuple(float(p) for p in row) for row in T)
            )

    # --- analytic moments (used as ground truth by downstream checks) ---

    def mean_alpha(self) -> float:
        return float(np.dot(self.weights, self.support))

    def mean_inv_alpha(self) -> float:
        return float(np.dot(self.weights, 1.0 / np.asarray(self.support, float)))

    def max_alpha(self) -> int:
        return max(self.support)

    def to_json_dict(self) -> dict:
        d = {"kind": self.kind, "support": list(self.support),
             "weights": list(self.weights)}
        if self.transition is not None:
            d["transition"] = [list(r) for r in self.transition]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "EnvLaw":
        return cls(kind=d["kind"], support=tuple(d["support"]),
                   weights=tuple(d["weights"]),
                   transition=tuple(map(tuple, d["transition"]))
                   if d.get("transition") is not None else None)


def iid_law(support, weights=None) -> EnvLaw:
    """I.i.d. law, uniform on ``support`` unless weights are given."""
    support = tuple(support)
    if weights is None:
        weights = (1.0 / len(support),) * len(support)
    return EnvLaw("iid", support, tuple(weights))


def constant_law(value: int) -> EnvLaw:
    return EnvLaw("constant", (value,), (1.0,))


def markov_law(support, transition) -> EnvLaw:
    """Markov-along-first-axis law; weights set to the stationary vector."""
    T = np.asarray(transition, dtype=float)
    evals, evecs = np.linalg.eig(T.T)
    k = int(np.argmin(np.abs(evals - 1.0)))
    w = np.real(evecs[:, k])
    w = w / w.sum()
    return EnvLaw("markov_chain_1d_product", tuple(support),
                  tuple(w), tuple(map(tuple, T)))


@dataclass(frozen=True)
class Environment:
    """A fixed realization of the occupancy field on a finite torus."""

    dims: tuple
    alpha: np.ndarray  # flat int64 over sites, row-major
    c_max: int
    law: EnvLaw
    seed: int
    _torus: Torus = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(L) for L in self.dims))
        a = np.asarray(self.alpha, dtype=np.int64)
        tor = torus(self.dims)
        if a.shape != (tor.n_sites,):
            raise ValueError("alpha must be flat over row-major sites")
        if a.min() < 1 or a.max() > self.c_max:
            raise ValueError(
                f"ellipticity violated: alpha range [{a.min()}, {a.max()}]"
                f" outside [1, {self.c_max}]")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "_torus", tor)

    @property
    def torus(self) -> Torus:
        return self._torus

    @property
    def n_sites(self) -> int:
        return self._torus.n_sites

    @property
    def ndim(self) -> int:
        return self._torus.ndim

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.to_json_dict(), sort_keys=True).encode())
        return h.hexdigest()[:16]

    def to_json_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "c_max": int(self.c_max),
            "law": self.law.to_json_dict(),
            "seed": int(self.seed),
            "alpha": [int(v) for v in self.alpha],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Environment":
        d = json.loads(text)
        return cls(dims=tuple(d["dims"]), alpha=np.asarray(d["alpha"]),
                   c_max=d["c_max"], law=EnvLaw.from_json_dict(d["law"]),
                   seed=d["seed"])


@dataclass(frozen=True)
class ConductanceField:
    """Symmetric bond conductances omega_xy = alpha_x * alpha_y.

    ``omega`` is stored over unordered bonds (site-major, +e_axis target);
    ``directed()`` expands to the directed-bond addressing of the torus.
    """

    env: Environment
    omega: np.ndarray  # (n_sites * d,) over unordered bonds

    def directed(self) -> np.ndarray:
        tor = self.env.torus
        a = self.env.alpha
        return (a[tor.bond_from] * a[tor.bond_to]).astype(np.int64)

    def value(self, x: int, y: int) -> int:
        tor = self.env.torus
        if not tor.are_neighbors(x, y):
            raise ValueError(f"sites {x}, {y} are not nearest neighbors")
        return int(self.env.alpha[x] * self.env.alpha[y])


def sample_environment(law: EnvLaw, dims, seed: int,
                       c_max: int = None) -> Environment:
    """Draw an environment; deterministic in ``(law, dims, seed)``.

    ``c_max`` defaults to ``max(law.support)`` and must dominate it.
    """
    dims = tuple(int(L) for L in dims)
    tor = torus(dims)
    if c_max is None:
        c_max = law.max_alpha()
    if c_max < law.max_alpha():
        raise ValueError("c_max below the largest support value")
    rng = rng_from(seed, "environment", law.kind)
    support = np.asarray(law.support, dtype=np.int64)
    weights = np.asarray(law.weights, dtype=float)

    if law.kind == "constant":
        a = np.full(tor.n_sites, support[0], dtype=np.int64)
    elif law.kind == "iid":
        a = rng.choice(support, size=tor.n_sites, p=weights)
    else:  # markov_chain_1d_product
        L0 = dims[0]
        rest = int(np.prod(dims[1:])) if len(dims) > 1 else 1
        T = np.asarray(law.transition, dtype=float)
        cumT = np.cumsum(T, axis=1)
        cum0 = np.cumsum(weights)
        states = np.empty((L0, rest), dtype=np.int64)
        states[0] = np.searchsorted(cum0, rng.random(rest), side="right")
        for i in range(1, L0):
            u = rng.random(rest)
            rows = cumT[states[i - 1]]
            states[i] = (rows < u[:, None]).sum(axis=1)
        a = support[states.reshape(-1)]
        # note: the chain wraps without seam conditioning; exact translation
        # stationarity holds away from the axis-0 seam only
    return Environment(dims=dims, alpha=a, c_max=int(c_max), law=law,
                       seed=int(seed))


def conductances(env: Environment) -> ConductanceField:
    """Bond conductances omega_xy = alpha_x alpha_y (periodic wrap included)."""
    x, y = env.torus.unordered_bond_endpoints()
    return ConductanceField(env=env, omega=(env.alpha[x] * env.alpha[y]))


def translate(env: Environment, shift) -> Environment:
    """Translated environment alpha'(x) = alpha(x + shift mod dims)."""
    shift = np.asarray(shift, dtype=np.int64)
    if shift.shape != (env.ndim,):
        raise ValueError("shift must have one entry per dimension")
    arr = env.alpha.reshape(env.dims)
    arr = np.roll(arr, tuple(-shift), axis=tuple(range(env.ndim)))
    return Environment(dims=env.dims, alpha=arr.reshape(-1), c_max=env.c_max,
                       law=env.law, seed=env.seed)


def ergodic_average(env: Environment, F, N: int) -> float:
    """Rescaled environment average ``N^{-d} sum_x F(x/N) alpha_x``.

    The sites are embedded as x/N; the support of ``F`` must fit inside the
    embedded torus ``[0, L_k/N)`` per axis, otherwise the Riemann sum would
    silently truncate mass.
    """
    if N < 1:
        raise ValueError("N must be a positive integer")
    lo, hi = F.support_box()
    for k, L in enumerate(env.dims):
        if lo[k] < 0.0 or hi[k] > L / N:
            raise ValueError(
                f"support of F along axis {k} is [{lo[k]}, {hi[k]}] but the "
                f"embedded torus covers [0, {L / N}); grow the torus or N")
    pts = env.torus.positions(scale=N)
    return float(np.sum(F(pts) * env.alpha) / N ** env.ndim)
