"""Time integration of du/dt = L u + X(u), L = -(gamma + A^alpha)^lam, lam = 1 - beta.

The linear part is propagated exactly in the eigenbasis; the nonlinearity is
either frozen over a step (ETD1) or resolved by the Picard iterates
F^{j+1}_t u = e^{tL} u + int_0^t e^{(t-s)L} X(F^j_s u) ds.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as np
from scipy.integrate import simpson

from .field import Field
from .operator import Discretization, EllipticOperator
from .potential import FlowParams, Potential, sup_v22


class FlowDivergence(RuntimeError):
    """Raised on a non-finite state; carries the last finite state and its step index."""

    def __init__(self, message: str, last_good: Optional[np.ndarray] = None, step: int = 0):
        super().__init__(message)
        self.last_good = last_good
        self.step = step


class SchemeKind(str, Enum):
    ETD1 = "etd1"
    PICARD = "picard"
    REFERENCE_FINE = "reference"


@dataclass(frozen=True)
class StepScheme:
    kind: SchemeKind = SchemeKind.ETD1
    picard_iterations: int = 4
    substeps: int = 8
    refinement: int = 32

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.kind is SchemeKind.PICARD and self.picard_iterations < 1:
            raise ValueError("Picard scheme needs j >= 1")

    @classmethod
    def parse(cls, text: str) -> "StepScheme":
        text = text.strip().lower()
        if text.startswith("picard"):
            j = int(text[len("picard"):] or 4)
            return cls(SchemeKind.PICARD, picard_iterations=j)
        if text in ("reference", "reference_fine", "fine"):
            return cls(SchemeKind.REFERENCE_FINE)
        return cls(SchemeKind(text))

    def label(self) -> str:
        if self.kind is SchemeKind.PICARD:
            return f"picard{self.picard_iterations}"
        return self.kind.value


ETD1 = StepScheme()


class FlowSystem:
    """Precomputed spectral data for one (operator, params, potential) triple.

    ``offset`` and ``forcing`` support the tilted problem u = offset + p, where
    only p is evolved: the pointwise source becomes
    gamma p - V2(x, offset + p) - forcing.
    """

    def __init__(self, op: EllipticOperator, params: FlowParams, potential: Potential,
                 offset: Optional[np.ndarray] = None, forcing: Optional[np.ndarray] = None,
                 tilt: Optional[np.ndarray] = None):
        self.op, self.params, self.potential = op, params, potential
        self.grid = op.grid
        self.decomposition = op.decomposition
        self.x = self.grid.coords()
        self.mask = self.grid.boundary_mask()
        self.offset = np.zeros(self.grid.size) if offset is None else np.asarray(offset, float)
        self.forcing = np.zeros(self.grid.size) if forcing is None else np.asarray(forcing, float)
        self.tilt = None if tilt is None else np.asarray(tilt, float)
        spectrum = op.shifted_spectrum(params.gamma)
        self.nu = spectrum**params.lam
        self.inverse_power = spectrum**-params.beta
        self._propagators: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    # -- pieces of the right-hand side ---------------------------------

    def source(self, u: np.ndarray) -> np.ndarray:
        g = self.params.gamma * u - self.potential.d1(self.x, u + self.offset) - self.forcing
        return np.where(self.mask, 0.0, g)

    def x_coeffs(self, u: np.ndarray) -> np.ndarray:
        return self.inverse_power * self.decomposition.forward(self.source(u))

    def rhs(self, u: np.ndarray) -> np.ndarray:
        c = self.decomposition.forward(u)
        return self.decomposition.inverse(-self.nu * c + self.x_coeffs(u))

    def propagator(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """(e^{-dt nu}, (1 - e^{-dt nu}) / nu) per mode."""
        if dt not in self._propagators:
            z = dt * self.nu
            self._propagators[dt] = (np.exp(-z), -np.expm1(-z) / self.nu)
        return self._propagators[dt]

    # -- stepping -------------------------------------------------------

    def etd1(self, u: np.ndarray, dt: float) -> np.ndarray:
        decay, phi = self.propagator(dt)
        c = self.decomposition.forward(u)
        return self.decomposition.inverse(decay * c + phi * self.x_coeffs(u))

    def picard(self, u: np.ndarray, dt: float, iterations: int, substeps: int = 8) -> np.ndarray:
        """F_dt^j u with the Duhamel integral by Simpson's rule on ``substeps`` sub-intervals."""
        decomposition = self.decomposition
        taus = np.linspace(0.0, dt, substeps + 1)
        c0 = decomposition.forward(u)
        decay = np.exp(-np.outer(taus, self.nu))  # decay[k] = e^{tau_k L}
        free = decay * c0  # F^0 at sub-nodes
        coeffs = free
        start = max(np.max(np.abs(c0)), 1e-300)
        for _ in range(iterations):
            xs = np.stack([self.x_coeffs(decomposition.inverse(c)) for c in coeffs])
            nxt = free.copy()
            for k in range(1, substeps + 1):
                integrand = decay[k::-1] * xs[: k + 1]  # e^{(tau_k - tau_i) L} X_i
                nxt[k] += simpson(integrand, x=taus[: k + 1], axis=0)
            coeffs = nxt
            if not np.all(np.isfinite(coeffs)) or np.max(np.abs(coeffs)) > 1e6 * (1 + start):
                raise FlowDivergence("Picard iterates diverged")
        return decomposition.inverse(coeffs[-1])

    def step(self, u: np.ndarray, dt: float, scheme: StepScheme = ETD1) -> np.ndarray:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if scheme.kind is SchemeKind.ETD1:
            return self.etd1(u, dt)
        if scheme.kind is SchemeKind.PICARD:
            return self.picard(u, dt, scheme.picard_iterations, scheme.substeps)
        fine = dt / scheme.refinement
        for _ in range(scheme.refinement):
            u = self.etd1(u, fine)
        return u

    def march(self, u: np.ndarray, dt: float, steps: int, scheme: StepScheme = ETD1) -> Iterator[np.ndarray]:
        for k in range(steps):
            with np.errstate(over="ignore", invalid="ignore"):
                nxt = self.step(u, dt, scheme)
            if not np.all(np.isfinite(nxt)):
                raise FlowDivergence(f"non-finite state after step {k + 1}", last_good=u, step=k)
            u = nxt
            yield u

    # -- diagnostics ----------------------------------------------------

    def elliptic_residual(self, u: np.ndarray) -> np.ndarray:
        """A^alpha u + forcing + V2(x, offset + u) on the unknowns (zero elsewhere)."""
        r = self.op.apply(u) + self.forcing + self.potential.d1(self.x, u + self.offset)
        return np.where(self.mask, 0.0, r)

    def residual(self, u: np.ndarray) -> float:
        return float(np.max(np.abs(self.elliptic_residual(u))))

    def energy(self, u: np.ndarray) -> float:
        op, grid = self.op, self.grid
        idx = op.unknowns
        if op.discretization is Discretization.FD and op.base_power == 1.0:
            grads = [D @ u[idx] for D in op.gradient_blocks]
            if self.tilt is not None:
                grads = [g + w for g, w in zip(grads, self.tilt)]
            w = op.flux_weights
            quad = sum(grads[i] * w[i, j] * grads[j] for i in range(grid.dim) for j in range(grid.dim))
            quadratic = 0.5 * grid.cell_volume * float(np.sum(quad))
        else:
            c = self.decomposition.forward(u)
            quadratic = 0.5 * float(np.sum(op.powered_eigenvalues * c**2))
            if self.tilt is not None:
                # constant coefficients: the cross term integrates to zero over the period cell
                quadratic += 0.5 * float(self.tilt @ op.coeffs.matrix @ self.tilt) * grid.volume
        potential = grid.cell_volume * float(np.sum(self.potential.value(self.x, u + self.offset)[idx]))
        return quadratic + potential

    def sobolev_gradient(self, u: np.ndarray) -> np.ndarray:
        """(gamma + A^alpha)^{-beta}(A^alpha u + V2) = -(L u + X(u))."""
        return -self.rhs(u)


def _system(op, params, potential) -> FlowSystem:
    return FlowSystem(op, params, potential)


def step(u: Field, dt: float, scheme: StepScheme, op: EllipticOperator, params: FlowParams,
         potential: Potential) -> Field:
    return Field(u.grid, _system(op, params, potential).step(u.values, dt, scheme))


def energy(u: Field, op: EllipticOperator, potential: Potential) -> float:
    """0.5 <a grad u, grad u> + int V(x, u), same difference stencil as the stiffness matrix."""
    params = FlowParams(gamma=1.0)
    return FlowSystem(op, params, potential).energy(u.values)


def residual(u: Field, op: EllipticOperator, potential: Potential) -> float:
    """max |A^alpha u + V2(x, u)|."""
    return FlowSystem(op, FlowParams(gamma=1.0), potential).residual(u.values)


def sobolev_gradient(u: Field, op: EllipticOperator, params: FlowParams, potential: Potential) -> Field:
    return Field(u.grid, _system(op, params, potential).sobolev_gradient(u.values))


def energy_derivative(u: Field, eta: Field, op: EllipticOperator, potential: Potential) -> float:
    """DS(u) eta = <A^alpha u + V2(x, u), eta>_{L2}."""
    system = FlowSystem(op, FlowParams(gamma=1.0), potential)
    return float(u.grid.cell_volume * np.dot(system.elliptic_residual(u.values), eta.values))


def linear_flow_closed_form(u0: Field, op: EllipticOperator, params: FlowParams, t: float) -> Field:
    """For V = 0: c_i(t) = exp(-t mu_i^alpha (gamma + mu_i^alpha)^{-beta}) c_i(0)."""
    mu = op.powered_eigenvalues
    rate = mu * (params.gamma + mu) ** -params.beta
    return Field(u0.grid, op.spectral_apply(u0.values, np.exp(-t * rate)))


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    max_norm: list = field(default_factory=list)
    picard_iterations: list = field(default_factory=list)
    energy_increases: list = field(default_factory=list)  # (step index, increase)
    converged: bool = False

    def record(self, t: float, u: Field, system: FlowSystem, iterations: int):
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory times must increase")
        self.times.append(t)
        self.states.append(u)
        self.energy.append(system.energy(u.values))
        self.residual.append(system.residual(u.values))
        self.max_norm.append(u.max_norm())
        self.picard_iterations.append(iterations)

    @property
    def final(self) -> Field:
        return self.states[-1]

    def to_csv(self, min_gap: Optional[list] = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["t", "energy", "residual", "max_norm"] + (["min_gap"] if min_gap is not None else [])
        writer.writerow(header)
        for k, t in enumerate(self.times):
            row = [t, self.energy[k], self.residual[k], self.max_norm[k]]
            if min_gap is not None:
                row.append(min_gap[k])
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def evolve(u0: Field, scheme: StepScheme, op: EllipticOperator, params: FlowParams, potential: Potential,
           system: Optional[FlowSystem] = None, energy_tol: float = 1e-8) -> Trajectory:
    """Step until t_end or until the residual drops below tol_residual; diagnostics at every step."""
    system = system or FlowSystem(op, params, potential)
    if not np.all(np.isfinite(u0.values)):
        raise FlowDivergence("non-finite initial state")
    iterations = scheme.picard_iterations if scheme.kind is SchemeKind.PICARD else 0
    traj = Trajectory()
    traj.record(0.0, u0, system, 0)
    if traj.residual[-1] < params.tol_residual:
        traj.converged = True
        return traj
    steps = int(math.ceil(params.t_end / params.dt - 1e-9))
    for k, values in enumerate(system.march(u0.values, params.dt, steps, scheme), start=1):
        traj.record(k * params.dt, Field(u0.grid, values), system, iterations)
        previous, current = traj.energy[-2], traj.energy[-1]
        if current > previous + energy_tol * (1 + abs(previous)):
            traj.energy_increases.append((k, current - previous))
        if traj.residual[-1] < params.tol_residual:
            traj.converged = True
            break
    return traj


@dataclass
class ComparisonReport:
    min_gap: float
    tolerance: float
    first_violation: Optional[tuple] = None  # (t, node)
    gaps: list = field(default_factory=list)  # min_x (u - v) per step

    @property
    def passed(self) -> bool:
        return self.min_gap >= -self.tolerance


def check_comparison(u0: Field, v0: Field, scheme: StepScheme, op: EllipticOperator, params: FlowParams,
                     potential: Potential, horizon: float, exploratory: bool = False,
                     system: Optional[FlowSystem] = None) -> ComparisonReport:
    """Evolve an ordered pair side by side and track min_x (u - v)."""
    if np.any(u0.values < v0.values - 1e-12):
        raise ValueError("comparison needs u0 >= v0")
    if not exploratory:
        bound = sup_v22(potential, u0.grid.dim)
        if params.gamma <= bound:
            raise ValueError(f"gamma={params.gamma} does not exceed sup|V22|={bound}")
    system = system or FlowSystem(op, params, potential)
    tolerance = 1e-8 * (1 + float(np.max(np.abs(u0.values - v0.values))))
    gap0 = u0.values - v0.values
    report = ComparisonReport(min_gap=float(gap0.min()), tolerance=tolerance, gaps=[float(gap0.min())])
    steps = int(math.ceil(horizon / params.dt - 1e-9))
    pairs = zip(system.march(u0.values, params.dt, steps, scheme), system.march(v0.values, params.dt, steps, scheme))
    for k, (u, v) in enumerate(pairs, start=1):
        gap = u - v
        low = float(gap.min())
        report.gaps.append(low)
        if low < report.min_gap:
            report.min_gap = low
        if low < -tolerance and report.first_violation is None:
            report.first_violation = (k * params.dt, int(np.argmin(gap)))
    return report
