"""Discrete divergence-form operator A = -div(a grad .) and its spectral calculus.

Every operator function used by the flow, (gamma + A^alpha)^s and the
semigroups exp(-t (gamma + A^alpha)^lam), is applied through one dense
symmetric eigendecomposition. The integral representations in
:mod:`fracflow.oracles` are checks against it, not alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .expressions import compile_expression, position_symbols, split_top_level
from .field import Boundary, Field, Grid


class Discretization(str, Enum):
    FOURIER = "fourier"
    FD = "fd"


@dataclass(frozen=True)
class ConstantCoeff:
    matrix: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("coefficient matrix must be square")
        if not np.allclose(a, a.T, atol=1e-14):
            raise ValueError("coefficient matrix must be symmetric")
        object.__setattr__(self, "matrix", a)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.matrix, (x.shape[0],) + self.matrix.shape)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class VariableCoeff:
    """a(x) as a callable on positions (n_points, d) -> (n_points, d, d)."""

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    label: str = "variable"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(x), dtype=float)


Coefficients = Union[ConstantCoeff, VariableCoeff]


def scalar_coefficient(a: Callable[..., np.ndarray], dim: int, label: str = "scalar") -> VariableCoeff:
    """a(x) * I from a scalar function taking one array per axis."""

    def fn(x):
        vals = np.asarray(a(*x.T), dtype=float)
        return vals[:, None, None] * np.eye(dim)[None]

    return VariableCoeff(fn, dim, label)


def matrix_coefficient(entries, label: str = "matrix") -> VariableCoeff:
    """Symmetric 2x2 field from callables (a11, a12, a22), each taking one array per axis."""

    def fn(x):
        a11, a12, a22 = (np.broadcast_to(np.asarray(f(*x.T), dtype=float), (x.shape[0],)) for f in entries)
        return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)

    return VariableCoeff(fn, 2, label)


def parse_coefficients(spec: str, dim: int) -> Coefficients:
    """``identity`` | ``diag:c1,..`` | ``matrix:a11,a12,a22`` | ``expr:<a(x)>`` | ``expr:<a11>,<a12>,<a22>``."""
    spec = spec.strip().strip('"')
    if spec == "identity":
        return ConstantCoeff(np.eye(dim))
    kind, _, body = spec.partition(":")
    if kind == "diag":
        entries = [float(v) for v in body.split(",")]
        if len(entries) != dim:
            raise ValueError(f"diag needs {dim} entries")
        return ConstantCoeff(np.diag(entries))
    if kind == "matrix":
        entries = [float(v) for v in body.split(",")]
        if dim == 1 and len(entries) == 1:
            return ConstantCoeff(np.array([[entries[0]]]))
        if dim == 2 and len(entries) == 3:
            a11, a12, a22 = entries
            return ConstantCoeff(np.array([[a11, a12], [a12, a22]]))
        raise ValueError("matrix needs a11 (d=1) or a11,a12,a22 (d=2)")
    if kind == "expr":
        parts = split_top_level(body)
        symbols = position_symbols(dim)
        if len(parts) == 1:
            return scalar_coefficient(compile_expression(parts[0], symbols), dim, label=f"expr:{parts[0]}")
        if dim == 2 and len(parts) == 3:
            return matrix_coefficient([compile_expression(t, symbols) for t in parts], label=f"expr:{body}")
        raise ValueError("expr needs a scalar a(x) or, for d=2, a11,a12,a22")
    raise ValueError(f"unknown coefficient spec {spec!r}")


def ellipticity_bounds(coeffs: Coefficients, points: np.ndarray) -> tuple[float, float]:
    """Sampled (Lambda1, Lambda2) of xi^T a(x) xi / |xi|^2."""
    a = coeffs(points)
    if not np.allclose(a, np.swapaxes(a, 1, 2), atol=1e-13):
        raise ValueError("coefficient matrix is not symmetric at some sample")
    eig = np.linalg.eigvalsh(a)
    return float(eig.min()), float(eig.max())


def coefficients_periodic(coeffs: Coefficients, dim: int, samples: int = 17, tol: float = 1e-12) -> bool:
    if isinstance(coeffs, ConstantCoeff):
        return True
    rng = np.random.default_rng(0)
    x = rng.uniform(0.0, 1.0, size=(samples, dim))
    base = coeffs(x)
    for axis in range(dim):
        e = np.zeros(dim)
        e[axis] = 1.0
        if not np.allclose(coeffs(x + e), base, atol=tol, rtol=0):
            return False
    return True


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Ascending eigenvalues and L2-orthonormal eigenvectors sampled on all nodes.

    On Dirichlet grids the eigenvectors vanish on the boundary layer and there
    are fewer of them than nodes.
    """

    grid: Grid
    eigenvalues: np.ndarray
    basis: np.ndarray
    constant_mode: bool = False  # column 0 is exactly the constant function

    def forward(self, values: np.ndarray) -> np.ndarray:
        return self.grid.cell_volume * (self.basis.T @ values)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return self.basis @ coeffs

    def multiply(self, values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
        if not self.constant_mode:
            coeffs = self.forward(values)
            if coeffs.ndim == 2:
                multiplier = multiplier[:, None]
            return self.inverse(multiplier * coeffs)
        # Constants are split off so that the constant eigenvalue rule holds exactly
        # rather than up to roundoff amplified by the top of the spectrum.
        mean = values.mean(axis=0)
        # a summed mean can be off by an ulp even for exactly constant input
        mean = np.where(np.all(values == values[:1], axis=0), values[0], mean)
        rest = values - mean
        flat = np.max(np.abs(rest), axis=0) <= 8 * np.finfo(float).eps * np.abs(mean)
        rest = np.where(flat, 0.0, rest)
        coeffs = self.forward(rest)
        tail = multiplier[1:, None] if coeffs.ndim == 2 else multiplier[1:]
        return multiplier[0] * mean + self.basis[:, 1:] @ (tail * coeffs[1:])

    def eigenfunction(self, i: int) -> Field:
        return Field(self.grid, self.basis[:, i])


class EllipticOperator:
    """A = -div(a(x) grad u) on a grid, optionally raised to a base power alpha <= 1."""

    def __init__(
        self,
        grid: Grid,
        coeffs: Coefficients,
        base_power: float = 1.0,
        discretization: Discretization | str = Discretization.FD,
    ):
        self.grid = grid
        self.coeffs = coeffs
        self.base_power = float(base_power)
        self.discretization = Discretization(discretization)
        if not 0.0 < self.base_power <= 1.0:
            raise ValueError("base_power must lie in (0, 1]")
        if coeffs.dim != grid.dim:
            raise ValueError("coefficient dimension does not match grid")
        if self.discretization is Discretization.FOURIER:
            if not isinstance(coeffs, ConstantCoeff):
                raise ValueError("the Fourier symbol route needs constant coefficients")
            if grid.boundary is not Boundary.PERIODIC:
                raise ValueError("the Fourier symbol route needs a periodic grid")
        lam1, lam2 = ellipticity_bounds(coeffs, self._sample_points())
        if lam1 <= 0:
            raise ValueError(f"coefficients not uniformly elliptic (Lambda1={lam1:.3g})")
        self.ellipticity = (lam1, lam2)

    def __repr__(self):
        return (
            f"EllipticOperator({self.grid}, {type(self.coeffs).__name__}, "
            f"alpha={self.base_power}, {self.discretization.value})"
        )

    def _sample_points(self) -> np.ndarray:
        h = self.grid.spacing
        x = self.grid.coords()
        return np.concatenate([x, x + 0.5 * h])

    # -- unknowns ---------------------------------------------------------

    @cached_property
    def unknowns(self) -> np.ndarray:
        """Node indices carrying degrees of freedom (all nodes unless Dirichlet)."""
        return np.flatnonzero(~self.grid.boundary_mask())

    # -- finite differences ------------------------------------------------

    def _forward_difference(self, axis: int) -> sp.csr_matrix:
        grid = self.grid
        idx = grid.index_grid()
        M = grid.nodes_per_axis
        rows = np.arange(grid.size)
        nxt = idx.copy()
        if grid.boundary is Boundary.PERIODIC:
            nxt[:, axis] = (nxt[:, axis] + 1) % M
            keep = np.ones(grid.size, dtype=bool)
        else:
            keep = idx[:, axis] < M - 1
            nxt[:, axis] = np.minimum(nxt[:, axis] + 1, M - 1)
        cols = np.ravel_multi_index(tuple(nxt.T), grid.shape)
        r = rows[keep]
        data = np.concatenate([np.full(r.size, 1.0), np.full(r.size, -1.0)])
        D = sp.csr_matrix(
            (data, (np.concatenate([r, r]), np.concatenate([cols[keep], r]))),
            shape=(grid.size, grid.size),
        )
        return D / grid.spacing

    @cached_property
    def gradient_blocks(self) -> list[sp.csr_matrix]:
        """Forward differences D_i^+ restricted to the unknowns."""
        return [self._forward_difference(i)[:, self.unknowns].tocsr() for i in range(self.grid.dim)]

    @cached_property
    def flux_weights(self) -> np.ndarray:
        """a^{ij} sampled at edge midpoints (i == j) or cell centres (i != j); shape (d, d, m)."""
        d, h = self.grid.dim, self.grid.spacing
        x = self.grid.coords()
        w = np.empty((d, d, self.grid.size))
        for i in range(d):
            for j in range(d):
                shift = np.zeros(d)
                shift[i] += 0.5 * h
                if j != i:
                    shift[j] += 0.5 * h
                w[i, j] = self.coeffs(x + shift)[:, i, j]
        return w

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Sum_ij (D_i^+)^T diag(a^ij) D_j^+ on the unknowns; symmetric by construction."""
        D = self.gradient_blocks
        w = self.flux_weights
        d = self.grid.dim
        A = sp.csr_matrix((self.unknowns.size, self.unknowns.size))
        for i in range(d):
            for j in range(d):
                A = A + D[i].T @ sp.diags(w[i, j]) @ D[j]
        return A.tocsr()

    # -- Fourier symbol ----------------------------------------------------

    @cached_property
    def _wave_indices(self) -> np.ndarray:
        return self.grid.index_grid()

    def _signed_frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        M = self.grid.nodes_per_axis
        k = self._wave_indices
        signed = np.where(k > M // 2, k - M, k).astype(float)
        nyquist = (M % 2 == 0) & (k == M // 2)
        return signed / self.grid.period, nyquist

    @cached_property
    def symbol(self) -> np.ndarray:
        """4 pi^2 xi^T a xi per wave index (C order, matching numpy.fft.fftn)."""
        xi, nyquist = self._signed_frequencies()
        a = self.coeffs.matrix
        d = self.grid.dim
        total = np.zeros(xi.shape[0])
        for i in range(d):
            for j in range(d):
                prod = xi[:, i] * xi[:, j]
                if i != j:
                    # the sign of a Nyquist frequency is ambiguous; drop mixed terms there
                    prod = np.where(nyquist[:, i] | nyquist[:, j], 0.0, prod)
                total += a[i, j] * prod
        return 4 * np.pi**2 * total

    def _fourier_decomposition(self) -> tuple[np.ndarray, np.ndarray]:
        grid = self.grid
        M = grid.nodes_per_axis
        k = self._wave_indices
        j = grid.index_grid()
        partner = np.ravel_multi_index(tuple(((-k) % M).T), grid.shape)
        columns, values = [], []
        phase = 2 * np.pi * (j @ k.T) / M  # (nodes, waves)
        for w in range(grid.size):
            p = partner[w]
            if p == w:
                columns.append(np.cos(phase[:, w]))
                values.append(self.symbol[w])
            elif w < p:
                columns.append(np.cos(phase[:, w]))
                columns.append(np.sin(phase[:, w]))
                values.extend([self.symbol[w], self.symbol[w]])
        basis = np.stack(columns, axis=1)
        basis /= np.sqrt(grid.cell_volume * np.sum(basis**2, axis=0))
        return np.asarray(values), basis

    # -- assembled operator -------------------------------------------------

    def assemble(self):
        """Sparse stiffness matrix (FD) or a matrix-free LinearOperator (Fourier) on the unknowns."""
        if self.discretization is Discretization.FD:
            return self.stiffness
        n = self.grid.size
        return LinearOperator((n, n), matvec=self._fourier_apply, dtype=float)

    def _fourier_apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        batch = values.shape[1:]
        u = values.reshape(self.grid.shape + batch)
        axes = tuple(range(self.grid.dim))
        symbol = self.symbol.reshape(self.grid.shape + (1,) * len(batch))
        out = np.fft.ifftn(symbol * np.fft.fftn(u, axes=axes), axes=axes)
        return out.real.reshape(values.shape)

    def apply_base(self, values: np.ndarray) -> np.ndarray:
        """A u (alpha ignored) on full-node values, one field per column for 2-D input;
        zero on Dirichlet boundary nodes."""
        if self.discretization is Discretization.FOURIER:
            return self._fourier_apply(values)
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape)
        out[self.unknowns] = self.stiffness @ values[self.unknowns]
        return out

    def apply(self, values: np.ndarray) -> np.ndarray:
        """A^alpha u on full-node values."""
        if self.base_power == 1.0:
            return self.apply_base(values)
        return self.decomposition.multiply(values, self.powered_eigenvalues)

    @cached_property
    def decomposition(self) -> SpectralDecomposition:
        if self.discretization is Discretization.FOURIER:
            mu, basis = self._fourier_decomposition()
            order = np.argsort(mu, kind="stable")
            mu, basis = mu[order], basis[:, order]
        else:
            dense = self.stiffness.toarray()
            mu, q = np.linalg.eigh(dense)
            basis = np.zeros((self.grid.size, mu.size))
            basis[self.unknowns] = q / np.sqrt(self.grid.cell_volume)
        scale = max(1.0, float(np.max(np.abs(mu))))
        if mu.min() < -1e-10 * scale:
            raise ValueError(f"operator has a negative eigenvalue {mu.min():.3g}")
        # roundoff on the constant mode would otherwise be amplified by mu**alpha
        mu = np.where(mu < 1e-10 * scale, 0.0, mu)
        constant_mode = self.grid.boundary is Boundary.PERIODIC
        if constant_mode:
            const = np.full(self.grid.size, 1.0 / np.sqrt(self.grid.volume))
            rest = basis[:, 1:]
            rest = rest - np.outer(const, self.grid.cell_volume * (const @ rest))
            basis = np.column_stack([const, rest])
        return SpectralDecomposition(self.grid, mu, basis, constant_mode)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.decomposition.eigenvalues

    @cached_property
    def powered_eigenvalues(self) -> np.ndarray:
        """mu_i^alpha, the spectrum of A^alpha."""
        return self.eigenvalues**self.base_power

    def shifted_spectrum(self, gamma: float) -> np.ndarray:
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        return gamma + self.powered_eigenvalues

    def spectral_apply(self, values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
        return self.decomposition.multiply(values, multiplier)


def assemble(op: EllipticOperator):
    return op.assemble()


def frac_power_apply(op: EllipticOperator, gamma: float, s: float, u: Field) -> Field:
    """(gamma + A^alpha)^s u."""
    spectrum = op.shifted_spectrum(gamma)
    return Field(u.grid, op.spectral_apply(u.values, spectrum**s))


def semigroup_apply(op: EllipticOperator, gamma: float, lam: float, t: float, u: Field) -> Field:
    """exp(-t (gamma + A^alpha)^lam) u, i.e. e^{tL} u with L = -(gamma + A^alpha)^lam."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not 0.0 < lam <= 1.0:
        raise ValueError("lam must lie in (0, 1]")
    spectrum = op.shifted_spectrum(gamma)
    return Field(u.grid, op.spectral_apply(u.values, np.exp(-t * spectrum**lam)))


def band_limited_field(op: EllipticOperator, rng: np.random.Generator, amplitude: float = 1.0) -> Field:
    """Random combination of the lowest ceil(m/4) eigenmodes, scaled to sup norm ``amplitude``."""
    decomposition = op.decomposition
    count = int(np.ceil(decomposition.eigenvalues.size / 4))
    coeffs = np.zeros(decomposition.eigenvalues.size)
    coeffs[:count] = rng.standard_normal(count)
    values = decomposition.inverse(coeffs)
    return Field(op.grid, amplitude * values / np.max(np.abs(values)))
