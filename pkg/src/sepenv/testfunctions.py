"""Smooth compactly supported test functions and macroscopic profiles.

Test functions are radial bumps that vanish identically outside a stated
radius.  Each carries closed-form (or cached high-accuracy quadrature)
values for its integral, absolute integral, square integral and sup-norm,
so downstream comparisons never introduce an extra discretization error.
They may be evaluated either on R^d or periodically on a torus of a given
period via the minimal-image displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

_KINDS = ("gaussian_bump", "cosine_bump", "polynomial_bump")
_POLY_POWER = 4
_COS_POWER = 2  # cos^(2q) profile


def _profile(kind: str, s: np.ndarray) -> np.ndarray:
    """Radial profile on s = r / radius in [0, 1)."""
    if kind == "gaussian_bump":
        # smooth mollifier, C^infinity and exactly supported on s < 1
        out = np.zeros_like(s, dtype=float)
        inside = s < 1.0
        si = s[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - si ** 2))
        return out
    if kind == "cosine_bump":
        out = np.zeros_like(s, dtype=float)
        inside = s < 1.0
        out[inside] = np.cos(0.5 * np.pi * s[inside]) ** (2 * _COS_POWER)
        return out
    if kind == "polynomial_bump":
        out = np.zeros_like(s, dtype=float)
        inside = s < 1.0
        out[inside] = (1.0 - s[inside] ** 2) ** _POLY_POWER
        return out
    raise ValueError(f"unknown bump kind {kind!r}")


@lru_cache(maxsize=None)
def _radial_moment(kind: str, d: int, power: int) -> float:
    """integral over R^d of profile(|u|)^power for unit radius."""
    if d == 1:
        val, err = integrate.quad(
            lambda s: _profile(kind, np.array([s]))[0] ** power, 0.0, 1.0,
            epsabs=1e-14, epsrel=1e-13, limit=200)
        return 2.0 * val
    # d-dimensional radial: surface measure s_{d-1} r^{d-1} dr
    sphere = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    val, err = integrate.quad(
        lambda s: s ** (d - 1) * _profile(kind, np.array([s]))[0] ** power,
        0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return sphere * val


@dataclass(frozen=True)
class TestFunction:
    """Radial bump A * profile(|u - center| / width), zero for |u-c| >= width.

    ``period`` switches evaluation to a torus of that side length (minimal
    image); the closed-form integrals require 2 * width <= period then.
    """

    kind: str
    center: tuple
    width: float
    amplitude: float = 1.0
    period: float = None

    __test__ = False  # not a pytest collection target

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (self.width > 0):
            raise ValueError("width must be positive")
        if self.period is not None and 2 * self.width > self.period:
            raise ValueError("bump support exceeds the torus period")

    @property
    def ndim(self) -> int:
        return len(self.center)

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        delta = u - np.asarray(self.center)
        if self.period is not None:
            delta = delta - self.period * np.round(delta / self.period)
        r = np.sqrt((delta ** 2).sum(axis=-1))
        return self.amplitude * _profile(self.kind, r / self.width)

    def support_box(self):
        lo = tuple(c - self.width for c in self.center)
        hi = tuple(c + self.width for c in self.center)
        return lo, hi

    def support_radius(self) -> float:
        return self.width

    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def integral(self) -> float:
        return (self.amplitude * self.width ** self.ndim
                * _radial_moment(self.kind, self.ndim, 1))

    def abs_integral(self) -> float:
        return abs(self.integral()) if self.amplitude >= 0 else -self.integral()

    def square_integral(self) -> float:
        return (self.amplitude ** 2 * self.width ** self.ndim
                * _radial_moment(self.kind, self.ndim, 2))

    def lattice_values(self, dims, N: int) -> np.ndarray:
        """Values at the embedded sites x/N of a torus with sides ``dims``."""
        from .lattice import torus
        return self(torus(dims).positions(scale=N))


def gaussian_bump(center, width, amplitude=1.0, period=None) -> TestFunction:
    return TestFunction("gaussian_bump", tuple(np.atleast_1d(center)),
                        width, amplitude, period)


def cosine_bump(center, width, amplitude=1.0, period=None) -> TestFunction:
    return TestFunction("cosine_bump", tuple(np.atleast_1d(center)),
                        width, amplitude, period)


def polynomial_bump(center, width, amplitude=1.0, period=None) -> TestFunction:
    return TestFunction("polynomial_bump", tuple(np.atleast_1d(center)),
                        width, amplitude, period)


# ---------------------------------------------------------------------------
# macroscopic profiles, mapping the unit torus into [0, 1]
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MacroscopicProfile:
    """Continuous periodic density profile with values in [0, 1].

    ``mean + amplitude * sin(2 pi frequency u)`` along the first coordinate
    (a constant profile when amplitude == 0).  The Fourier description is the
    closed-form reference for heat evolution.
    """

    mean: float = 0.5
    amplitude: float = 0.0
    frequency: int = 1

    def __post_init__(self):
        if not (0.0 <= self.mean - abs(self.amplitude)
                and self.mean + abs(self.amplitude) <= 1.0):
            raise ValueError("profile range leaves [0, 1]")

    def __call__(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return self.mean + self.amplitude * np.sin(
            2.0 * np.pi * self.frequency * u[..., 0])

    def verify_range(self, grid_points: int = 4096) -> bool:
        g = np.linspace(0.0, 1.0, grid_points, endpoint=False)[:, None]
        v = self(g)
        return bool((v >= -1e-12).all() and (v <= 1 + 1e-12).all())


def sine_profile(mean=0.5, amplitude=0.5, frequency=1) -> MacroscopicProfile:
    return MacroscopicProfile(mean, amplitude, frequency)


def constant_profile(value: float) -> MacroscopicProfile:
    return MacroscopicProfile(mean=value, amplitude=0.0)
