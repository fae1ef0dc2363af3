"""Centered hypercube lattice and multilinear hat-function interpolation.

The grid is Pi = {(i_1 delta, ..., i_d delta) : i_k in {-N~, ..., N~}},
a full centered hypercube of (2 N~ + 1)^d nodes whose convex hull is the
box [-N~ delta, N~ delta]^d.  Restricting to full hypercubes keeps the
Euclidean projection onto the hull an O(d) componentwise clamp and lets
interpolation touch only the <= 2^d corners of the enclosing cell.

The interpolation operator P acts on row-vector-valued node data: inside
the box it is the multilinear hat-basis sum; outside, the value at the
clamped point.  P is a sup-norm contraction and reproduces piecewise
multilinear functions exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Centered lattice with mesh delta and half-width n_tilde nodes."""

    dim: int
    delta: float
    n_tilde: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.n_tilde < 1:
            raise ValueError("n_tilde must be >= 1")

    @property
    def n_nodes(self) -> int:
        return (2 * self.n_tilde + 1) ** self.dim

    @property
    def half_width(self) -> float:
        """Box half-width N~ delta."""
        return self.n_tilde * self.delta

    @property
    def side(self) -> int:
        return 2 * self.n_tilde + 1

    @cached_property
    def _strides(self) -> np.ndarray:
        # row-major linearization over (i_1, ..., i_d): i_d varies fastest
        return self.side ** np.arange(self.dim - 1, -1, -1)

    @cached_property
    def multi_indices(self) -> np.ndarray:
        """(N, d) integer multi-indices in {-N~, ..., N~}, row-major order."""
        axes = [np.arange(-self.n_tilde, self.n_tilde + 1)] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """(N, d) node coordinates in the same row-major order."""
        return self.multi_indices * self.delta

    def flat_index(self, multi_index) -> int:
        """Linear index of a multi-index (i_1, ..., i_d)."""
        mi = np.asarray(multi_index, dtype=int)
        if np.any(np.abs(mi) > self.n_tilde):
            raise IndexError(f"multi-index {multi_index} outside the lattice")
        return int((mi + self.n_tilde) @ self._strides)


@dataclass(frozen=True)
class GridFunction:
    """Row-vector (1 x d) values attached to the grid nodes."""

    grid: Grid
    values: np.ndarray  # (N, d)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes, self.grid.dim):
            raise ValueError(
                f"values shape {v.shape} != ({self.grid.n_nodes}, {self.grid.dim})"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)


def zero_grid_function(grid: Grid) -> GridFunction:
    return GridFunction(grid, np.zeros((grid.n_nodes, grid.dim)))


def hat_basis(grid: Grid, z, x) -> float:
    """Hat function psi_z(x) = prod_k (1 - |  (x_k - z_k) / delta |)_+ ."""
    z = np.asarray(z, dtype=float).reshape(grid.dim)
    onlattice = np.abs(np.round(z / grid.delta) * grid.delta - z) <= 1e-9 * grid.delta
    if not (onlattice.all() and np.all(np.abs(z) <= grid.half_width + 1e-9)):
        raise ValueError(f"z = {z} is not a grid node")
    x = np.asarray(x, dtype=float).reshape(grid.dim)
    w = 1.0 - np.abs((x - z) / grid.delta)
    return float(np.prod(np.maximum(w, 0.0)))


def project_to_box(grid: Grid, x) -> np.ndarray:
    """Euclidean projection onto the grid's box: a componentwise clamp."""
    x = np.asarray(x, dtype=float)
    return np.clip(x, -grid.half_width, grid.half_width)


def interpolate_many(gf: GridFunction, X) -> np.ndarray:
    """Evaluate the interpolation operator P at points X of shape (m, d).

    Points outside the box are clamped first.  Cells are the half-open
    boxes [z, z + delta)^d located by floor division; the top face of the
    outer box folds into the last cell, which is value-irrelevant by
    continuity but fixes determinism.
    """
    grid = gf.grid
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, d = X.shape
    if d != grid.dim:
        raise ValueError(f"points have dimension {d}, grid has {grid.dim}")

    H = grid.half_width
    u = (np.clip(X, -H, H) + H) / grid.delta      # in [0, 2 N~]
    cell = np.floor(u).astype(np.int64)
    np.clip(cell, 0, grid.side - 2, out=cell)
    frac = u - cell                               # in [0, 1]

    strides = grid._strides
    base = cell @ strides
    out = np.zeros((m, d))
    for corner in range(1 << d):
        bits = np.array([(corner >> (d - 1 - k)) & 1 for k in range(d)])
        w = np.prod(np.where(bits[None, :] == 1, frac, 1.0 - frac), axis=1)
        if not w.any():
            continue
        out += w[:, None] * gf.values[base + bits @ strides]
    return out


def interpolate(gf: GridFunction, x) -> np.ndarray:
    """P evaluated at a single point; returns a (d,) row vector."""
    return interpolate_many(gf, np.asarray(x, dtype=float).reshape(1, -1))[0]


def weighted_norm(gf: GridFunction, rho=None) -> float:
    """Node-restricted weighted sup-norm: max_z ||v(z)|| / rho(z).

    rho must satisfy rho >= 1; rho=None means the plain sup-norm.
    """
    norms = np.linalg.norm(gf.values, axis=1)
    if rho is None:
        return float(norms.max())
    rz = np.asarray(rho(gf.grid.coordinates), dtype=float)
    if np.min(rz) < 1.0 - 1e-12:
        raise ValueError("weight function must satisfy rho(x) >= 1")
    return float((norms / rz).max())


def save_grid_function(gf: GridFunction, path) -> None:
    """CSV with columns (i_1..i_d, x_1..x_d, v_1..v_d), row-major node order."""
    d = gf.grid.dim
    header = (
        [f"i{k + 1}" for k in range(d)]
        + [f"x{k + 1}" for k in range(d)]
        + [f"v{k + 1}" for k in range(d)]
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        coords = gf.grid.coordinates
        for mi, xz, vz in zip(gf.grid.multi_indices, coords, gf.values):
            w.writerow(
                [str(int(i)) for i in mi]
                + [f"{v:.17g}" for v in xz]
                + [f"{v:.17g}" for v in vz]
            )


def load_grid_function(path) -> GridFunction:
    """Inverse of save_grid_function; infers the grid from the index block."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for name in header if name.startswith("i"))
    mi = np.array([[int(v) for v in r[:d]] for r in body])
    xs = np.array([[float(v) for v in r[d : 2 * d]] for r in body])
    vs = np.array([[float(v) for v in r[2 * d : 3 * d]] for r in body])
    n_tilde = int(mi.max())
    # recover delta from the nodes with nonzero index
    mask = mi != 0
    delta = float(np.median(np.abs(xs[mask] / mi[mask])))
    grid = Grid(dim=d, delta=delta, n_tilde=n_tilde)
    values = np.zeros((grid.n_nodes, d))
    idx = (mi + n_tilde) @ grid._strides
    values[idx] = vs
    return GridFunction(grid, values)
