"""Finite torus geometry shared by all simulation modules.

Sites of a d-dimensional torus with side lengths ``dims`` are addressed by a
flat row-major index (``numpy.ravel_multi_index`` convention).  Directed
nearest-neighbor bonds are addressed as ``site * 2d + slot`` where slots
enumerate directions axis-major: ``+e_1, -e_1, +e_2, -e_2, ...``.  Unordered
bonds are addressed as ``site * d + axis`` and point from ``site`` to its
``+e_axis`` neighbor.  All wrap-around is periodic.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class Torus:
    """Neighbor tables for a periodic lattice.

    Parameters
    ----------
    dims : sequence of int
        Side lengths per dimension, each >= 2.
    """

    def __init__(self, dims):
        dims = tuple(int(L) for L in dims)
        if len(dims) == 0 or any(L < 2 for L in dims):
            raise ValueError(f"torus side lengths must all be >= 2, got {dims}")
        self.dims = dims
        self.ndim = len(dims)
        self.n_sites = int(np.prod(dims))
        self.n_directions = 2 * self.ndim

        idx = np.arange(self.n_sites)
        coords = np.stack(np.unravel_index(idx, dims), axis=1)  # (n_sites, d)
        nbr = np.empty((self.n_sites, self.n_directions), dtype=np.int64)
        for axis in range(self.ndim):
            for sign_slot, step in ((0, +1), (1, -1)):
                shifted = coords.copy()
                shifted[:, axis] = (shifted[:, axis] + step) % dims[axis]
                nbr[:, 2 * axis + sign_slot] = np.ravel_multi_index(
                    shifted.T, dims
                )
        self.coords = coords
        self.neighbors = nbr
        # directed-bond endpoint tables, bond b = site * 2d + slot
        self.bond_from = np.repeat(idx, self.n_directions)
        self.bond_to = nbr.reshape(-1)
        self.n_directed_bonds = self.n_sites * self.n_directions
        self.n_bonds = self.n_sites * self.ndim  # unordered, via +e_axis

    def positions(self, scale: float = 1.0) -> np.ndarray:
        """Site coordinates divided by ``scale``, shape (n_sites, d)."""
        return self.coords / scale

    def unordered_bond_endpoints(self):
        """Endpoint arrays (x, y) for unordered bonds, y = x + e_axis."""
        x = np.repeat(np.arange(self.n_sites), self.ndim)
        slots = np.tile(np.arange(self.ndim) * 2, self.n_sites)
        y = self.neighbors[x, slots]
        return x, y

    def are_neighbors(self, x: int, y: int) -> bool:
        return y in self.neighbors[x]

    def torus_distance(self, x, y) -> np.ndarray:
        """Euclidean distance with the minimal-image convention."""
        dx = np.abs(self.coords[x] - self.coords[y])
        dims = np.asarray(self.dims)
        dx = np.minimum(dx, dims - dx)
        return np.sqrt((dx.astype(float) ** 2).sum(axis=-1))


@lru_cache(maxsize=64)
def _torus_cached(dims: tuple) -> Torus:
    return Torus(dims)


def torus(dims) -> Torus:
    """Memoized :class:`Torus` constructor."""
    return _torus_cached(tuple(int(L) for L in dims))
