"""Integral representations of operator functions, used as independent checks.

All integrals run over (0, inf) and are evaluated in the variable log(t) with
Gauss-Legendre panels on a truncated range. The neglected end pieces are
handled by their leading asymptotic terms, so the truncation points can stay
moderate. Each routine doubles the node count until two successive results
agree to ``QuadratureSpec.tol``.

Route independence:
  * ``balakrishnan_apply`` uses sparse LU resolvent solves (FD, alpha = 1) or
    FFT division (Fourier symbol), never the eigendecomposition.
  * ``gamma_function_apply`` and ``subordination_apply`` need exp(-t(gamma+A))
    at hundreds of t values up to 1e4; they take it from the eigendecomposition,
    so they check the integral identities rather than the eigenvectors.
  * ``heat_kernel_apply`` is a direct periodized-Gaussian convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import erf, erfc, gamma as gamma_fn

from .field import Boundary, Field, Grid
from .operator import ConstantCoeff, Discretization, EllipticOperator


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    t_min: float = 1e-8
    t_max: float = 1e4
    nodes: int = 400
    tol: float = 1e-6
    panel_order: int = 8
    max_doublings: int = 4


@dataclass(frozen=True, eq=False)
class QuadratureResult:
    field: Field
    error: float
    nodes: int


def log_gauss_legendre(a: float, b: float, nodes: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Nodes t_k and weights w_k with sum w_k f(t_k) ~ int_a^b f(t) dt, panels uniform in log t."""
    panels = max(1, nodes // order)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(math.log(a), math.log(b), panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    s = (0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)).ravel()
    ws = (0.5 * (hi - lo) * w[None, :]).ravel()
    t = np.exp(s)
    return t, ws * t


def _as_batch(u) -> tuple[Grid, np.ndarray, bool]:
    if isinstance(u, Field):
        return u.grid, u.values[:, None], True
    fields = list(u)
    return fields[0].grid, np.stack([f.values for f in fields], axis=1), False


def _wrap(grid: Grid, values: np.ndarray, single: bool):
    if single:
        return Field(grid, values[:, 0])
    return [Field(grid, values[:, i]) for i in range(values.shape[1])]


def _refine(evaluate, quad: QuadratureSpec) -> tuple[np.ndarray, float, int]:
    nodes = quad.nodes
    previous = evaluate(nodes)
    for _ in range(max(quad.max_doublings, 1)):  # one doubling at least, for an error estimate
        nodes *= 2
        current = evaluate(nodes)
        scale = max(np.max(np.abs(current)), 1e-300)
        err = float(np.max(np.abs(current - previous)) / scale)
        if err <= quad.tol:
            return current, err, nodes
        previous = current
    raise QuadratureError(f"quadrature not converged: relative change {err:.2e} > {quad.tol:.1e}")


class _Resolvent:
    """(shift + gamma + A)^{-1} without the eigendecomposition where possible."""

    def __init__(self, op: EllipticOperator, gamma: float):
        self.op, self.gamma = op, gamma
        if op.base_power != 1.0 and op.discretization is Discretization.FD:
            self.mode = "spectral"
        elif op.discretization is Discretization.FOURIER:
            self.mode = "fft"
            self.symbol = op.symbol.reshape(op.grid.shape) ** op.base_power
        else:
            self.mode = "sparse"
            self.A = op.stiffness.tocsc()
            self.I = sp.identity(self.A.shape[0], format="csc")

    def norm_bound(self) -> float:
        """Upper bound on ||gamma + A^alpha||."""
        if self.mode == "sparse":
            return self.gamma + float(abs(self.A).sum(axis=1).max())
        if self.mode == "fft":
            return self.gamma + float(self.symbol.max())
        return self.gamma + float(self.op.powered_eigenvalues.max())

    def apply_operator(self, values: np.ndarray) -> np.ndarray:
        """(gamma + A^alpha) values."""
        if self.mode == "sparse":
            out = self.gamma * values.copy()
            idx = self.op.unknowns
            out[idx] += self.A @ values[idx]
            return out
        if self.mode == "fft":
            return self._fft_multiply(values, self.gamma + self.symbol)
        return self.op.spectral_apply(values, self.op.shifted_spectrum(self.gamma))

    def solve(self, shift: float, values: np.ndarray) -> np.ndarray:
        c = shift + self.gamma
        if self.mode == "sparse":
            out = np.zeros_like(values)
            idx = self.op.unknowns
            out[idx] = splu(self.A + c * self.I).solve(values[idx])
            return out
        if self.mode == "fft":
            return self._fft_multiply(values, 1.0 / (c + self.symbol))
        return self.op.spectral_apply(values, 1.0 / (shift + self.op.shifted_spectrum(self.gamma)))

    def _fft_multiply(self, values, multiplier):
        shape = self.op.grid.shape
        out = np.empty_like(values)
        for col in range(values.shape[1]):
            u = values[:, col].reshape(shape)
            out[:, col] = np.fft.ifftn(multiplier * np.fft.fftn(u)).real.ravel()
        return out


def balakrishnan_apply(op: EllipticOperator, gamma: float, beta: float, u, quad: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """(gamma + A)^{-beta} u = sin(pi beta)/pi int_0^inf t^{-beta} (t + gamma + A)^{-1} u dt."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    grid, values, single = _as_batch(u)
    res = _Resolvent(op, gamma)
    a = quad.t_min
    b = max(quad.t_max, 1e4 * res.norm_bound())
    # int_0^a t^-beta (t+C)^-1 ~ a^{1-beta}/(1-beta) C^-1 ; int_b^inf ~ b^-beta/beta - b^{-beta-1}/(beta+1) C
    lower = a ** (1 - beta) / (1 - beta) * res.solve(0.0, values)
    upper = b**-beta / beta * values - b ** (-beta - 1) / (beta + 1) * res.apply_operator(values)
    prefactor = math.sin(math.pi * beta) / math.pi

    def evaluate(nodes):
        t, w = log_gauss_legendre(a, b, nodes, quad.panel_order)
        total = lower + upper
        for tk, wk in zip(t, w):
            total = total + wk * tk**-beta * res.solve(tk, values)
        return prefactor * total

    out, err, used = _refine(evaluate, quad)
    return QuadratureResult(_wrap(grid, out, single), err, used)


def gamma_function_apply(op: EllipticOperator, gamma: float, beta: float, u, quad: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """(gamma + A)^{-beta} u = 1/Gamma(beta) int_0^inf t^{beta-1} exp(-t(gamma + A)) u dt."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    grid, values, single = _as_batch(u)
    decomposition = op.decomposition
    spectrum = op.shifted_spectrum(gamma)
    coeffs = decomposition.forward(values)
    a = quad.t_min
    b = max(quad.t_max, 40.0 / gamma)
    # int_0^a t^{beta-1} e^{-tC} ~ a^beta/beta - a^{beta+1}/(beta+1) C ; tail beyond b is below e^{-40}
    lower = (a**beta / beta - a ** (beta + 1) / (beta + 1) * spectrum)[:, None] * coeffs

    def evaluate(nodes):
        t, w = log_gauss_legendre(a, b, nodes, quad.panel_order)
        weights = (w * t ** (beta - 1))[None, :] * np.exp(-np.outer(spectrum, t))
        integral = weights.sum(axis=1)[:, None] * coeffs
        return decomposition.inverse(lower + integral) / gamma_fn(beta)

    out, err, used = _refine(evaluate, quad)
    return QuadratureResult(_wrap(grid, out, single), err, used)


def stable_density_half(t: float, tau: np.ndarray) -> np.ndarray:
    """One-sided 1/2-stable density t (4 pi)^{-1/2} tau^{-3/2} exp(-t^2 / (4 tau))."""
    tau = np.asarray(tau, dtype=float)
    return t / math.sqrt(4 * math.pi) * tau**-1.5 * np.exp(-(t**2) / (4 * tau))


def subordination_mass(t: float, quad: QuadratureSpec = QuadratureSpec(), nodes: int | None = None) -> float:
    """Quadrature of the density over [t_min, t_max] plus the exact tail masses."""
    tau, w = log_gauss_legendre(quad.t_min, quad.t_max, nodes or quad.nodes, quad.panel_order)
    bulk = float(np.sum(w * stable_density_half(t, tau)))
    lower = erfc(t / (2 * math.sqrt(quad.t_min)))
    upper = erf(t / (2 * math.sqrt(quad.t_max)))
    return bulk + lower + upper


def subordination_apply(op: EllipticOperator, gamma: float, t: float, u, quad: QuadratureSpec = QuadratureSpec()) -> QuadratureResult:
    """exp(-t (gamma + A)^{1/2}) u as the average of exp(-tau(gamma + A)) u against the 1/2-stable density."""
    if t <= 0:
        raise ValueError("t must be positive")
    grid, values, single = _as_batch(u)
    decomposition = op.decomposition
    spectrum = op.shifted_spectrum(gamma)
    coeffs = decomposition.forward(values)
    mass = subordination_mass(t, quad)
    if abs(mass - 1.0) > 1e-8:
        raise QuadratureError(f"subordination density mass {mass!r} deviates from 1")
    # mass beyond t_max is erf(t/2sqrt(b)) and is damped there by exp(-b gamma)
    neglected = erf(t / (2 * math.sqrt(quad.t_max))) * math.exp(-quad.t_max * gamma)
    if neglected > quad.tol:
        raise QuadratureError(f"truncated tail {neglected:.2e} exceeds tolerance; raise t_max")

    def evaluate(nodes):
        tau, w = log_gauss_legendre(quad.t_min, quad.t_max, nodes, quad.panel_order)
        density = stable_density_half(t, tau)
        if np.any(density < 0):
            raise QuadratureError("negative subordination density at a quadrature node")
        weights = (w * density)[None, :] * np.exp(-np.outer(spectrum, tau))
        return decomposition.inverse(weights.sum(axis=1)[:, None] * coeffs)

    out, err, used = _refine(evaluate, quad)
    return QuadratureResult(_wrap(grid, out, single), err + neglected, used)


def periodized_heat_kernel_1d(grid: Grid, t: float, cutoff: float = 1e-14) -> np.ndarray:
    """(4 pi t)^{-1/2} sum_k exp(-(delta + k N)^2 / 4t) at offsets delta = j h, j = 0..M-1."""
    M, N, h = grid.nodes_per_axis, grid.period, grid.spacing
    delta = np.arange(M) * h
    total = np.zeros(M)
    k = 0
    while True:
        shells = [k] if k == 0 else [k, -k]
        terms = sum(np.exp(-((delta + s * N) ** 2) / (4 * t)) for s in shells)
        total += terms
        # offsets lie in [0, N), so every shell with |k| >= 2 sits at least (|k|-1) N away
        if k >= 1 and math.exp(-((k * N - N) ** 2) / (4 * t)) < cutoff:
            break
        k += 1
    return total / math.sqrt(4 * math.pi * t)


def heat_kernel_apply(grid: Grid, t: float, u: Field) -> Field:
    """e^{t Delta} u on a periodic grid by direct convolution with the periodized Gaussian."""
    if t <= 0:
        raise ValueError("t must be positive")
    if grid.boundary is not Boundary.PERIODIC:
        raise ValueError("heat kernel route needs a periodic grid")
    M, h = grid.nodes_per_axis, grid.spacing
    kernel = periodized_heat_kernel_1d(grid, t)
    offsets = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M
    circulant = h * kernel[offsets]
    values = u.reshaped()
    for axis in range(grid.dim):
        values = np.moveaxis(np.tensordot(circulant, values, axes=([1], [axis])), 0, axis)
    return Field(grid, values.ravel())


def identity_operator(grid: Grid, base_power: float = 1.0) -> EllipticOperator:
    return EllipticOperator(grid, ConstantCoeff(np.eye(grid.dim)), base_power, Discretization.FOURIER)
