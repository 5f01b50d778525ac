"""Potentials V(x, y), the gamma rule, and the nonlinear map X."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .expressions import compile_expression, position_symbols, split_top_level
from .field import Field
from .operator import EllipticOperator

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Potential:
    """V with its first two y-derivatives; ``x`` is an (m, d) array of positions."""

    name: str
    value: Evaluator
    d1: Evaluator
    d2: Evaluator
    periodic_in_y: bool = True
    smoothness: int = 2
    v22_bound: Optional[float] = None

    def __post_init__(self):
        if self.smoothness < 2:
            raise ValueError("potentials need smoothness r >= 2")


def _zeros(x, y):
    return np.zeros_like(np.asarray(y, dtype=float))


def zero() -> Potential:
    return Potential("zero", _zeros, _zeros, _zeros)


def pendulum(eps: float) -> Potential:
    """eps (1 - cos 2 pi y)."""
    k = 2 * math.pi
    return Potential(
        f"pendulum:{eps!r}",
        lambda x, y: eps * (1 - np.cos(k * y)),
        lambda x, y: eps * k * np.sin(k * y),
        lambda x, y: eps * k**2 * np.cos(k * y),
    )


def modulated(eps: float, g: Callable[..., np.ndarray], label: str = "g") -> Potential:
    """eps cos(2 pi y) g(x) with g 1-periodic; g takes one array per axis."""
    k = 2 * math.pi

    def gx(x):
        return np.asarray(g(*np.asarray(x).T), dtype=float)

    return Potential(
        f"modulated:{eps!r},{label}",
        lambda x, y: eps * np.cos(k * y) * gx(x),
        lambda x, y: -eps * k * np.sin(k * y) * gx(x),
        lambda x, y: -eps * k**2 * np.cos(k * y) * gx(x),
    )


def from_expressions(v: str, v2: str, v22: str, dim: int, periodic_in_y: bool = True,
                     v22_bound: Optional[float] = None) -> Potential:
    names = position_symbols(dim) + ["y"]
    fns = [compile_expression(text, names) for text in (v, v2, v22)]

    def wrap(fn):
        return lambda x, y: fn(*np.asarray(x).T, y)

    return Potential(f"expr:{v},{v2},{v22}", *(wrap(f) for f in fns),
                     periodic_in_y=periodic_in_y, v22_bound=v22_bound)


def parse_potential(spec: str, dim: int) -> Potential:
    """``zero`` | ``pendulum:<eps>`` | ``modulated:<eps>,<g(x)>`` | ``expr:<V>,<V2>,<V22>``."""
    spec = spec.strip().strip('"')
    if spec == "zero":
        return zero()
    kind, _, body = spec.partition(":")
    if kind == "pendulum":
        return pendulum(float(body))
    if kind == "modulated":
        eps, gtext = split_top_level(body)
        g = compile_expression(gtext, position_symbols(dim))
        return modulated(float(eps), g, gtext)
    if kind == "expr":
        parts = split_top_level(body)
        if len(parts) != 3:
            raise ValueError("expr potential needs V, V2 and V22 separated by commas")
        return from_expressions(*parts, dim=dim)
    raise ValueError(f"unknown potential spec {spec!r}")


def sup_v22(potential: Potential, dim: int, grid_samples: int = 48) -> float:
    """max |V22| over the periodicity cell [0,1]^d x [0,1], polished in y by golden section."""
    if potential.v22_bound is not None:
        return float(potential.v22_bound)
    if not potential.periodic_in_y:
        raise ValueError("V is not periodic in y; supply v22_bound explicitly")
    s = np.linspace(0.0, 1.0, grid_samples, endpoint=False)
    axes = np.meshgrid(*([s] * (dim + 1)), indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=1)
    x, y = pts[:, :dim], pts[:, dim]
    vals = np.abs(potential.d2(x, y))
    best = int(np.argmax(vals))
    top = float(vals[best])
    step = 1.0 / grid_samples
    x0 = x[best : best + 1]

    def neg(yy):
        return -float(np.abs(potential.d2(x0, np.array([yy])))[0])

    try:
        res = minimize_scalar(neg, bracket=(y[best] - step, y[best], y[best] + step), method="golden")
        top = max(top, -res.fun)
    except ValueError:
        pass  # the sampled point is not bracketed as a maximum in y; keep the sample
    return top


def auto_gamma(potential: Potential, dim: int) -> float:
    return 1.1 * sup_v22(potential, dim) + 0.1


@dataclass(frozen=True)
class FlowParams:
    gamma: float
    beta: float = 0.5
    dt: float = 1e-2
    t_end: float = 5.0
    tol_residual: float = 0.0
    max_picard: int = 4

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def lam(self) -> float:
        return 1.0 - self.beta


def core_map(u_values: np.ndarray, x: np.ndarray, gamma: float, potential: Potential) -> np.ndarray:
    """gamma u - V2(x, u), nondecreasing in u once gamma >= sup |V22|."""
    return gamma * u_values - potential.d1(x, u_values)


def x_apply(op: EllipticOperator, params: FlowParams, u: Field, potential: Potential) -> Field:
    """X(u) = (gamma + A^alpha)^{-beta} (gamma u - V2(x, u))."""
    g = core_map(u.values, u.grid.coords(), params.gamma, potential)
    g = np.where(u.grid.boundary_mask(), 0.0, g)
    spectrum = op.shifted_spectrum(params.gamma)
    return Field(u.grid, op.spectral_apply(g, spectrum**-params.beta))


@dataclass
class LInfinityReport:
    x_norm: float
    x_bound: float
    semigroup: list = field(default_factory=list)  # (t, norm, bound)

    @property
    def x_margin(self) -> float:
        return self.x_bound - self.x_norm

    @property
    def semigroup_margin(self) -> float:
        return min((b - n for _, n, b in self.semigroup), default=math.inf)

    @property
    def ok(self) -> bool:
        return self.x_margin >= -1e-9 and self.semigroup_margin >= -1e-9


def l_infinity_bound_check(op: EllipticOperator, u: Field, params: FlowParams, potential: Potential,
                           times=(0.0, 0.1, 0.5, 1.0, 2.0), v2_samples: int = 48) -> LInfinityReport:
    """Compare ||X(u)||, ||e^{tL} u|| in sup norm against gamma^lam ||u|| + gamma^-beta ||V2|| and e^{-gamma^lam t} ||u||."""
    from .operator import semigroup_apply

    gamma, beta, lam = params.gamma, params.beta, params.lam
    s = np.linspace(0.0, 1.0, v2_samples, endpoint=False)
    axes = np.meshgrid(*([s] * (u.grid.dim + 1)), indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=1)
    v2_sup = float(np.max(np.abs(potential.d1(pts[:, :-1], pts[:, -1]))))
    if not potential.periodic_in_y:
        # off-cell values are not sampled; fall back to the values actually seen by X
        v2_sup = max(v2_sup, float(np.max(np.abs(potential.d1(u.grid.coords(), u.values)))))
    unorm = u.max_norm()
    report = LInfinityReport(
        x_norm=x_apply(op, params, u, potential).max_norm(),
        x_bound=gamma**lam * unorm + gamma**-beta * v2_sup,
    )
    for t in times:
        norm = semigroup_apply(op, gamma, lam, t, u).max_norm()
        report.semigroup.append((t, norm, math.exp(-(gamma**lam) * t) * unorm))
    return report
