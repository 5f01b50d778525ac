"""Uniform sample grids, sampled fields and the discrete inner products on them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np


class Boundary(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Grid:
    """Tensor grid with spacing 1/n on [0, N)^d (periodic) or [0, N]^d (Dirichlet box).

    Periodic grids carry (N*n)^d nodes. Dirichlet grids also store the far
    boundary, so they carry (N*n + 1)^d nodes of which the outer layer is pinned
    to zero.
    """

    dim: int
    period: int
    points_per_period: int
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.period < 1 or self.points_per_period < 1:
            raise ValueError("period and points_per_period must be positive")
        if self.period * self.points_per_period < 4:
            raise ValueError("need at least 4 points per axis")

    @property
    def spacing(self) -> float:
        return 1.0 / self.points_per_period

    @property
    def cells_per_axis(self) -> int:
        return self.period * self.points_per_period

    @property
    def nodes_per_axis(self) -> int:
        extra = 1 if self.boundary is Boundary.DIRICHLET else 0
        return self.cells_per_axis + extra

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.nodes_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return float(self.period**self.dim)

    def index_grid(self) -> np.ndarray:
        """Integer node indices, shape (size, dim), C order (last axis fastest)."""
        axes = [np.arange(self.nodes_per_axis)] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def coords(self) -> np.ndarray:
        """Node positions h*index, shape (size, dim)."""
        return self.index_grid() * self.spacing

    def boundary_mask(self) -> np.ndarray:
        if self.boundary is Boundary.PERIODIC:
            return np.zeros(self.size, dtype=bool)
        idx = self.index_grid()
        last = self.nodes_per_axis - 1
        return np.any((idx == 0) | (idx == last), axis=1)

    def shift_permutation(self, k) -> np.ndarray:
        """Index map realizing (C_k u)[i] = u[i + k*n] on a periodic grid.

        ``k`` is an integer vector (or scalar in 1-D) in units of the unit cell.
        """
        if self.boundary is not Boundary.PERIODIC:
            raise ValueError("integer shifts need a periodic grid")
        k = np.atleast_1d(np.asarray(k, dtype=int))
        if k.shape != (self.dim,):
            raise ValueError(f"shift must have {self.dim} components")
        idx = self.index_grid()
        shifted = (idx + k * self.points_per_period) % self.nodes_per_axis
        return np.ravel_multi_index(tuple(shifted.T), self.shape)

    def header(self) -> str:
        return (
            f"# grid d={self.dim} N={self.period} n={self.points_per_period} "
            f"bc={self.boundary.value}"
        )


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} samples, got {values.size}")
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise ValueError(f"non-finite sample at node {bad[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            other = other.values
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            other = other.values
        return Field(self.grid, self.values - other)

    def __mul__(self, scalar):
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Coefficients of a field against an L2-orthonormal eigenbasis."""

    grid: Grid
    coefficients: np.ndarray


def _check_same_grid(u: Field, v: Field):
    if u.grid != v.grid:
        raise ValueError(f"grid mismatch: {u.grid} vs {v.grid}")


def field_from_fn(grid: Grid, f: Callable[..., np.ndarray], boundary_tol: float = 1e-12) -> Field:
    """Sample ``f`` at the nodes; ``f`` receives one coordinate array per axis."""
    x = grid.coords()
    try:
        values = np.asarray(f(*x.T), dtype=float)
        if values.shape != (grid.size,):
            values = np.broadcast_to(values, (grid.size,)).astype(float)
    except (TypeError, ValueError):
        values = np.array([float(f(*p)) for p in x])
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise ValueError(f"non-finite sample at node {bad[0]} (x={x[bad[0]]})")
    if grid.boundary is Boundary.DIRICHLET:
        mask = grid.boundary_mask()
        offending = np.flatnonzero(mask & (np.abs(values) > boundary_tol))
        if offending.size:
            i = offending[0]
            raise ValueError(
                f"Dirichlet boundary value {values[i]:.3g} at node {i} (x={x[i]}) is not zero"
            )
        values = np.where(mask, 0.0, values)
    return Field(grid, values)


def constant_field(grid: Grid, c: float) -> Field:
    return Field(grid, np.full(grid.size, float(c)))


def inner_l2(u: Field, v: Field) -> float:
    _check_same_grid(u, v)
    return float(u.grid.cell_volume * np.dot(u.values, v.values))


def to_spectral(u: Field, decomposition) -> SpectralCoeffs:
    if u.grid != decomposition.grid:
        raise ValueError("field and decomposition live on different grids")
    return SpectralCoeffs(u.grid, decomposition.forward(u.values))


def to_physical(c: SpectralCoeffs, decomposition) -> Field:
    coeffs = np.asarray(c.coefficients, dtype=float)
    if coeffs.shape != decomposition.eigenvalues.shape:
        raise ValueError(
            f"expected {decomposition.eigenvalues.size} coefficients, got {coeffs.size}"
        )
    return Field(decomposition.grid, decomposition.inverse(coeffs))


def inner_hs(u: Field, v: Field, decomposition, gamma: float, s: float, base_power: float = 1.0) -> float:
    """<(gamma + A^base_power)^s u, v> evaluated diagonally in the eigenbasis."""
    _check_same_grid(u, v)
    shifted = gamma + decomposition.eigenvalues**base_power
    if np.any(shifted < 0) or (s < 0 and np.any(shifted == 0)):
        raise ValueError("gamma + eigenvalue must be positive")
    cu = decomposition.forward(u.values)
    cv = decomposition.forward(v.values)
    return float(np.sum(shifted**s * cu * cv))


# -- CSV serialization -------------------------------------------------------

def field_to_csv(u: Field) -> str:
    grid = u.grid
    buf = io.StringIO()
    buf.write(grid.header() + "\n")
    coord_names = ["x"] if grid.dim == 1 else ["x", "y"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", *coord_names, "value"])
    for i, (pos, val) in enumerate(zip(grid.coords(), u.values)):
        writer.writerow([i, *(repr(float(p)) for p in pos), repr(float(val))])
    return buf.getvalue()


def parse_grid_header(line: str) -> Grid:
    if not line.startswith("# grid"):
        raise ValueError(f"missing grid header: {line!r}")
    parts = dict(tok.split("=", 1) for tok in line[len("# grid"):].split())
    return Grid(int(parts["d"]), int(parts["N"]), int(parts["n"]), Boundary(parts["bc"]))


def field_from_csv(text: str) -> Field:
    lines = text.splitlines()
    grid = parse_grid_header(lines[0])
    rows = list(csv.reader(lines[1:]))
    if rows and rows[0][0] == "index":
        rows = rows[1:]
    values = np.empty(grid.size)
    seen = np.zeros(grid.size, dtype=bool)
    for row in rows:
        i = int(row[0])
        values[i] = float(row[-1])
        seen[i] = True
    if not seen.all():
        raise ValueError(f"missing node {np.flatnonzero(~seen)[0]} in CSV")
    return Field(grid, values)


def save_field(u: Field, path) -> None:
    Path(path).write_text(field_to_csv(u))


def load_field(path) -> Field:
    return field_from_csv(Path(path).read_text())
