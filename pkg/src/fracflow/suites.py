"""Operator-level verification suites run by ``fracflow verify``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .field import Boundary, Field, constant_field
from .operator import (ConstantCoeff, Discretization, EllipticOperator, band_limited_field, frac_power_apply,
                       parse_coefficients, semigroup_apply)
from .oracles import (QuadratureSpec, balakrishnan_apply, gamma_function_apply, heat_kernel_apply,
                      identity_operator, subordination_apply, subordination_mass)


@dataclass
class Check:
    suite: str
    name: str
    error: float
    tolerance: float
    asserted: bool = True

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _fields(op: EllipticOperator, rng: np.random.Generator, count: int) -> list[Field]:
    return [band_limited_field(op, rng) for _ in range(count)]


def calculus_suite(op: EllipticOperator, gamma: float, rng, count: int = 20) -> list[Check]:
    checks = []
    us = [Field(op.grid, np.where(op.grid.boundary_mask(), 0.0, rng.standard_normal(op.grid.size)))
          for _ in range(count)]
    power, semigroup = 0.0, 0.0
    for u in us:
        s, r = rng.uniform(-1.5, 1.0, size=2)
        lhs = frac_power_apply(op, gamma, s, frac_power_apply(op, gamma, r, u))
        power = max(power, _rel(lhs.values, frac_power_apply(op, gamma, s + r, u).values))
        t1, t2 = rng.uniform(0.0, 1.0, size=2)
        lam = rng.uniform(0.1, 1.0)
        lhs = semigroup_apply(op, gamma, lam, t1, semigroup_apply(op, gamma, lam, t2, u))
        semigroup = max(semigroup, _rel(lhs.values, semigroup_apply(op, gamma, lam, t1 + t2, u).values))
    checks.append(Check("calculus", "power_law", power, 1e-10))
    checks.append(Check("calculus", "semigroup_law", semigroup, 1e-10))
    if op.grid.boundary is Boundary.PERIODIC:
        c = constant_field(op.grid, 1.7)
        err = 0.0
        for s in (-0.5, 0.5, 1.0, -1.0):
            err = max(err, _rel(frac_power_apply(op, gamma, s, c).values, gamma**s * c.values))
        checks.append(Check("calculus", "constants_rule", err, 1e-12))
    return checks


def quadrature_suite(op: EllipticOperator, gamma: float, rng, count: int = 20,
                     quad: QuadratureSpec = QuadratureSpec()) -> list[Check]:
    checks = []
    us = _fields(op, rng, count)
    for beta in (0.25, 0.5, 0.75):
        ref = [frac_power_apply(op, gamma, -beta, u).values for u in us]
        for name, oracle in (("balakrishnan", balakrishnan_apply), ("gamma_function", gamma_function_apply)):
            result = oracle(op, gamma, beta, us, quad)
            err = max(_rel(f.values, r) for f, r in zip(result.field, ref))
            checks.append(Check("quadrature", f"{name}_beta{beta}", err, 1e-6))
    return checks


def subordination_suite(op: EllipticOperator, gamma: float, rng, count: int = 20,
                        quad: QuadratureSpec = QuadratureSpec()) -> list[Check]:
    checks = []
    us = _fields(op, rng, count)
    for t in (0.1, 1.0):
        checks.append(Check("subordination", f"density_mass_t{t}", abs(subordination_mass(t, quad) - 1.0), 1e-8))
        result = subordination_apply(op, gamma, t, us, quad)
        err = max(_rel(f.values, semigroup_apply(op, gamma, 0.5, t, u).values) for f, u in zip(result.field, us))
        checks.append(Check("subordination", f"semigroup_t{t}", err, 1e-6))
    return checks


def heat_kernel_suite(op: EllipticOperator, rng) -> list[Check]:
    grid = op.grid
    if grid.boundary is not Boundary.PERIODIC:
        return []
    fourier = identity_operator(grid)
    checks = []
    delta = np.zeros(grid.size)
    delta[grid.size // 3] = 1.0 / grid.cell_volume
    for t in (0.05, 0.2):
        for label, u in (("random", band_limited_field(fourier, rng)), ("delta", Field(grid, delta))):
            direct = heat_kernel_apply(grid, t, u).values
            spectral = math.exp(t) * semigroup_apply(fourier, 1.0, 1.0, t, u).values
            checks.append(Check("heat_kernel", f"{label}_t{t}", float(np.max(np.abs(direct - spectral))), 1e-8))
    return checks


def smoothing_suite(ops: list[EllipticOperator], gamma: float, lam: float) -> list[Check]:
    """max_i nu_i^n exp(-t nu_i) <= (n / (sqrt(2) t))^n with nu = (gamma + mu)^lam."""
    checks = []
    for k, op in enumerate(ops):
        nu = op.shifted_spectrum(gamma) ** lam
        for n in (1, 2, 3):
            for t in (0.1, 1.0):
                value = float(np.max(nu**n * np.exp(-t * nu)))
                bound = (n / (math.sqrt(2) * t)) ** n
                checks.append(Check("smoothing", f"op{k}_n{n}_t{t}", value / bound, 1.0))
    return checks


def positivity_suite(op: EllipticOperator, gamma: float, rng, count: int = 20) -> list[Check]:
    """min exp(-t(gamma + A)) u >= -1e-9 for u >= 0; asserted only where the stencil is an M-matrix."""
    asserted = _is_m_matrix_setting(op)
    checks = []
    us = [Field(op.grid, np.abs(band_limited_field(op, rng).values)) for _ in range(count)]
    for t in (0.05, 0.2, 1.0):
        low = min(float(semigroup_apply(op, gamma, 1.0, t, u).values.min()) for u in us)
        checks.append(Check("positivity", f"semigroup_t{t}", max(0.0, -low), 1e-9, asserted=asserted))
    return checks


def _is_m_matrix_setting(op: EllipticOperator) -> bool:
    if op.discretization is not Discretization.FD:
        return False
    if isinstance(op.coeffs, ConstantCoeff):
        a = op.coeffs.matrix
        return bool(np.allclose(a, np.diag(np.diag(a))))
    w = op.flux_weights
    return all(np.allclose(w[i, j], 0.0) for i in range(op.grid.dim) for j in range(op.grid.dim) if i != j)


def smoothing_operators(op: EllipticOperator) -> list[EllipticOperator]:
    """The configured operator plus a variable-coefficient and a base-power-1/2 variant."""
    grid = op.grid
    var = "expr:1+0.5*sin(2*pi*x)" if grid.dim == 1 else "expr:1+0.5*sin(2*pi*x1)*cos(2*pi*x2)"
    return [
        op,
        EllipticOperator(grid, parse_coefficients(var, grid.dim), 1.0, Discretization.FD),
        EllipticOperator(grid, op.coeffs, 0.5, op.discretization),
    ]


SUITES = ("calculus", "quadrature", "subordination", "heat_kernel", "smoothing", "positivity")


def run_suites(op: EllipticOperator, gamma: float, lam: float, seed: int, only: Optional[str] = None,
               count: int = 20, tolerance: Optional[float] = None) -> list[Check]:
    selected = [s.strip() for s in only.split(",")] if only else list(SUITES)
    unknown = set(selected) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites {sorted(unknown)}; choose from {SUITES}")
    rng = np.random.default_rng(seed)
    runners: dict[str, Callable[[], list[Check]]] = {
        "calculus": lambda: calculus_suite(op, gamma, rng, count),
        "quadrature": lambda: quadrature_suite(op, gamma, rng, count),
        "subordination": lambda: subordination_suite(op, gamma, rng, count),
        "heat_kernel": lambda: heat_kernel_suite(op, rng),
        "smoothing": lambda: smoothing_suite(smoothing_operators(op), gamma, lam),
        "positivity": lambda: positivity_suite(op, gamma, rng, count),
    }
    checks = []
    for name in SUITES:
        if name in selected:
            checks.extend(runners[name]())
    if tolerance is not None:
        for c in checks:
            c.tolerance = tolerance
    return checks
