"""Plane-like critical points u = omega . x + p with rational omega = q / N.

Only the N-periodic correction p is evolved. The tilt enters through the
forcing g_omega = A(omega . x), which is periodic because a(x) is, and through
V2 evaluated at the full u.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .field import Boundary, Field
from .flow import ETD1, FlowSystem, StepScheme
from .operator import Discretization, EllipticOperator, coefficients_periodic
from .potential import FlowParams, Potential


@dataclass(frozen=True)
class RotationVector:
    numerators: tuple
    denominator: int = 1

    def __post_init__(self):
        q = tuple(int(v) for v in np.atleast_1d(self.numerators))
        N = int(self.denominator)
        if N < 1:
            raise ValueError("denominator must be positive")
        g = math.gcd(N, *q)
        object.__setattr__(self, "numerators", tuple(v // g for v in q))
        object.__setattr__(self, "denominator", N // g)

    @classmethod
    def parse(cls, text: str) -> "RotationVector":
        """``q1,...,qd/N`` or ``q/N``; a bare integer vector means N = 1."""
        text = text.strip().strip('"')
        nums, _, den = text.partition("/")
        return cls(tuple(int(v) for v in nums.split(",")), int(den or 1))

    @property
    def dim(self) -> int:
        return len(self.numerators)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.numerators, dtype=float) / self.denominator

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def dot_exact(self, k) -> Fraction:
        return Fraction(sum(q * int(ki) for q, ki in zip(self.numerators, k)), self.denominator)

    def __str__(self):
        return ",".join(str(q) for q in self.numerators) + f"/{self.denominator}"


@dataclass(frozen=True, eq=False)
class TiltedField:
    omega: RotationVector
    p: Field

    def __post_init__(self):
        if self.p.grid.boundary is not Boundary.PERIODIC:
            raise ValueError("tilted fields live on periodic grids")
        if self.p.grid.period % self.omega.denominator:
            raise ValueError("grid period must be a multiple of the frequency denominator")

    @property
    def linear_part(self) -> np.ndarray:
        return self.p.grid.coords() @ self.omega.vector

    def full_values(self) -> np.ndarray:
        return self.linear_part + self.p.values

    def normalized(self) -> "TiltedField":
        """Shift by the integer k = -floor(mean u) so the mean of u lies in [0, 1)."""
        k = -math.floor(float(np.mean(self.full_values())))
        return TiltedField(self.omega, self.p + float(k)) if k else self


def _check_tilt_setting(omega: RotationVector, op: EllipticOperator, potential: Potential):
    grid = op.grid
    if grid.boundary is not Boundary.PERIODIC:
        raise ValueError("plane-like states need a periodic grid")
    if omega.dim != grid.dim:
        raise ValueError("frequency dimension does not match grid")
    if grid.period % omega.denominator:
        raise ValueError(f"grid period {grid.period} incompatible with frequency {omega}")
    if not coefficients_periodic(op.coeffs, grid.dim):
        raise ValueError("coefficients are not 1-periodic")
    if not potential.periodic_in_y:
        raise ValueError("potential must be periodic in y")
    if any(omega.numerators) and op.base_power != 1.0:
        raise ValueError("a nonzero tilt needs base power 1")


def tilt_forcing(op: EllipticOperator, omega: RotationVector) -> np.ndarray:
    """g_omega = A(omega . x) = sum_i (D_i^+)^T (sum_j a^{ij} omega_j); zero for constant coefficients."""
    if op.discretization is Discretization.FOURIER or not any(omega.numerators):
        return np.zeros(op.grid.size)
    w = op.flux_weights
    w_omega = omega.vector
    g = np.zeros(op.grid.size)
    for i, D in enumerate(op.gradient_blocks):
        flux = sum(w[i, j] * w_omega[j] for j in range(op.grid.dim))
        g += D.T @ flux
    return g


def tilted_system(omega: RotationVector, op: EllipticOperator, params: FlowParams, potential: Potential) -> FlowSystem:
    _check_tilt_setting(omega, op, potential)
    offset = op.grid.coords() @ omega.vector
    return FlowSystem(op, params, potential, offset=offset, forcing=tilt_forcing(op, omega), tilt=omega.vector)


def tilted_rhs(tilted: TiltedField, op: EllipticOperator, params: FlowParams, potential: Potential) -> Field:
    """dp/dt = -(gamma + A)^{-beta}(A p + g_omega + V2(x, omega . x + p))."""
    system = tilted_system(tilted.omega, op, params, potential)
    return Field(tilted.p.grid, system.rhs(tilted.p.values))


def tilted_residual(tilted: TiltedField, op: EllipticOperator, potential: Potential) -> float:
    system = tilted_system(tilted.omega, op, FlowParams(gamma=1.0), potential)
    return system.residual(tilted.p.values)


def tilted_energy(tilted: TiltedField, op: EllipticOperator, potential: Potential) -> float:
    system = tilted_system(tilted.omega, op, FlowParams(gamma=1.0), potential)
    return system.energy(tilted.p.values)


# -- Birkhoff property -------------------------------------------------------

@dataclass
class BirkhoffReport:
    ok: bool
    worst_pair: Optional[tuple]
    worst_violation: float


def birkhoff_check(tilted: TiltedField, window: int = 3, tol: float = 1e-8) -> BirkhoffReport:
    """Check that u(x+k) - u(x) - l keeps the sign of omega . k - l for |k_j| <= window."""
    omega, p = tilted.omega, tilted.p
    grid = p.grid
    reach = math.ceil(window * float(np.sum(np.abs(omega.vector)))) + 1
    worst, worst_pair = 0.0, None
    ks = np.stack(np.meshgrid(*([np.arange(-window, window + 1)] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim)
    for k in ks:
        dp = p.values[grid.shift_permutation(k)] - p.values
        lo, hi = float(dp.min()), float(dp.max())
        wk = omega.dot_exact(k)
        for l in range(-reach, reach + 1):
            slack = wk - l
            s_lo, s_hi = float(slack) + lo, float(slack) + hi
            if slack > 0:
                violation = max(0.0, -s_lo)
            elif slack < 0:
                violation = max(0.0, s_hi)
            else:
                violation = min(max(0.0, -s_lo), max(0.0, s_hi))
            if violation > worst:
                worst, worst_pair = violation, (tuple(int(v) for v in k), l)
    return BirkhoffReport(ok=worst <= tol, worst_pair=worst_pair, worst_violation=worst)


# -- minimizers --------------------------------------------------------------

@dataclass
class MinimizerReport:
    omega: RotationVector
    converged: bool
    residual: float
    time: float
    steps: int
    energy: float
    residual_curve: list = field(default_factory=list)  # (t, residual)
    energy_curve: list = field(default_factory=list)  # (t, energy)
    snapshots: list = field(default_factory=list)  # normalized TiltedField states


def find_minimizer(omega: RotationVector, op: EllipticOperator, params: FlowParams, potential: Potential,
                   scheme: StepScheme = ETD1, snapshot_every: int = 5,
                   system: Optional[FlowSystem] = None, min_steps: int = 0) -> tuple[TiltedField, MinimizerReport]:
    """Descend from u0 = omega . x until max|A u + V2(x, u)| < tol_residual or t_end.

    ``min_steps`` keeps the descent running (and recording) past an early convergence,
    which is useful when a full energy/residual history is wanted.
    """
    system = system or tilted_system(omega, op, params, potential)
    grid = op.grid
    p = np.zeros(grid.size)
    current = TiltedField(omega, Field(grid, p))
    report = MinimizerReport(omega, False, system.residual(p), 0.0, 0, system.energy(p))
    report.residual_curve.append((0.0, report.residual))
    report.energy_curve.append((0.0, report.energy))
    report.snapshots.append(current.normalized())
    max_steps = int(math.ceil(params.t_end / params.dt - 1e-9))
    step = 0
    while (report.residual >= params.tol_residual or step < min_steps) and step < max_steps:
        p = system.step(p, params.dt, scheme)
        step += 1
        if not np.all(np.isfinite(p)):
            raise FloatingPointError(f"descent for omega={omega} produced non-finite values")
        report.residual = system.residual(p)
        done = report.residual < params.tol_residual and step >= min_steps
        if step % snapshot_every == 0 or done or step == max_steps:
            t = step * params.dt
            current = TiltedField(omega, Field(grid, p)).normalized()
            p = current.p.values.copy()
            report.energy = system.energy(p)
            report.residual_curve.append((t, report.residual))
            report.energy_curve.append((t, report.energy))
            report.snapshots.append(current)
    current = TiltedField(omega, Field(grid, p)).normalized()
    report.converged = report.residual < params.tol_residual
    report.time, report.steps = step * params.dt, step
    report.residual = system.residual(current.p.values)
    report.energy = system.energy(current.p.values)
    return current, report


def newton_minimizer(omega: RotationVector, op: EllipticOperator, potential: Potential,
                     p0: Optional[np.ndarray] = None, tol: float = 1e-11, max_iter: int = 200) -> TiltedField:
    """Damped (Levenberg-Marquardt) Newton solve of A p + g_omega + V2(x, omega . x + p) = 0."""
    _check_tilt_setting(omega, op, potential)
    grid = op.grid
    x = grid.coords()
    offset = x @ omega.vector
    forcing = tilt_forcing(op, omega)
    if op.discretization is Discretization.FD and op.base_power == 1.0:
        A = op.stiffness
    else:
        A = sp.csr_matrix(op.decomposition.multiply(np.eye(grid.size), op.powered_eigenvalues))
    p = np.zeros(grid.size) if p0 is None else np.array(p0, dtype=float)

    def F(q):
        return A @ q + forcing + potential.d1(x, offset + q)

    r = F(p)
    damping = 1e-6
    identity = sp.identity(grid.size, format="csr")
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            break
        J = (A + sp.diags(potential.d2(x, offset + p))).tocsc()
        while True:
            trial = p + spsolve((J + damping * identity).tocsc(), -r)
            r_trial = F(trial)
            if np.linalg.norm(r_trial) < np.linalg.norm(r):
                p, r = trial, r_trial
                damping = max(damping / 10, 1e-14)
                break
            damping *= 10
            if damping > 1e12:
                raise RuntimeError("damped Newton stalled")
    else:
        raise RuntimeError(f"Newton did not converge (residual {np.max(np.abs(r)):.2e})")
    return TiltedField(omega, Field(grid, p)).normalized()


# -- equivariance ------------------------------------------------------------

@dataclass
class EquivarianceReport:
    translation_error: float  # || Phi(u0 + l) - (Phi u0 + l) ||
    shift_error: float  # || Phi(C_k u0) - C_k Phi u0 ||

    def ok(self, tol: float = 1e-9) -> bool:
        return self.translation_error <= tol and self.shift_error <= tol


def check_equivariance(u0: Field, op: EllipticOperator, params: FlowParams, potential: Potential, t: float,
                       k, l: int, scheme: StepScheme = ETD1) -> EquivarianceReport:
    grid = u0.grid
    k = np.atleast_1d(np.asarray(k))
    if not np.all(k == np.round(k)):
        raise ValueError("shift k must be an integer vector")
    if int(l) != l:
        raise ValueError("l must be an integer")
    if not potential.periodic_in_y:
        raise ValueError("equivariance under R_l needs V periodic in y")
    if not coefficients_periodic(op.coeffs, grid.dim):
        raise ValueError("coefficients are not 1-periodic")
    perm = grid.shift_permutation(k.astype(int))
    system = FlowSystem(op, params, potential)
    steps = int(math.ceil(t / params.dt - 1e-9))

    def run(values):
        out = values
        for out in system.march(values, params.dt, steps, scheme):
            pass
        return out

    base = run(u0.values)
    translated = run(u0.values + l)
    shifted = run(u0.values[perm])
    return EquivarianceReport(
        translation_error=float(np.max(np.abs(translated - (base + l)))),
        shift_error=float(np.max(np.abs(shifted - base[perm]))),
    )


# -- oscillation and sweeps --------------------------------------------------

def oscillation(tilted: TiltedField, center, side: float) -> float:
    """max - min of u over the nodes of the closed cube |x_j - c_j| <= side / 2."""
    grid = tilted.p.grid
    center = np.atleast_1d(np.asarray(center, dtype=float))
    h, M = grid.spacing, grid.nodes_per_axis
    lo, hi = center - side / 2, center + side / 2
    if np.any(lo < -1e-12) or np.any(hi > grid.period + 1e-12):
        raise ValueError("cube must lie inside the fundamental domain")
    ranges = [np.arange(math.ceil(a / h - 1e-9), math.floor(b / h + 1e-9) + 1) for a, b in zip(lo, hi)]
    if any(r.size == 0 for r in ranges):
        raise ValueError("cube contains no grid nodes")
    idx = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, grid.dim)
    flat = np.ravel_multi_index(tuple((idx % M).T), grid.shape)
    u = idx * h @ tilted.omega.vector + tilted.p.values[flat]
    return float(u.max() - u.min())


def continued_fraction_convergents(x: float, count: int) -> list[Fraction]:
    """First ``count`` convergents h_k / k_k of the continued fraction of x."""
    h_prev, h = 1, int(math.floor(x))
    k_prev, k = 0, 1
    out = [Fraction(h, k)]
    frac = x - math.floor(x)
    while len(out) < count:
        if frac < 1e-15:
            break
        x = 1.0 / frac
        a = int(math.floor(x))
        frac = x - a
        h_prev, h = h, a * h + h_prev
        k_prev, k = k, a * k + k_prev
        out.append(Fraction(h, k))
    return out


def golden_convergents(levels: int) -> list[RotationVector]:
    """Convergents of 1/phi starting at 1/2: 1/2, 2/3, 3/5, 5/8, ..."""
    fracs = continued_fraction_convergents((math.sqrt(5) - 1) / 2, levels + 2)[2:]
    return [RotationVector((f.numerator,), f.denominator) for f in fracs]


@dataclass
class SweepRow:
    omega: RotationVector
    N: int
    residual: float
    birkhoff_ok: bool
    osc_q: float
    sup_p: float
    energy_per_cell: float
    converged: bool
    error: Optional[str] = None
    minimizer: Optional[TiltedField] = None


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["omega", "N", "residual", "birkhoff_ok", "osc_Q", "sup_p", "energy_per_cell"])
        for r in self.rows:
            writer.writerow([str(r.omega), r.N, repr(r.residual), r.birkhoff_ok, repr(r.osc_q), repr(r.sup_p),
                             repr(r.energy_per_cell)])
        return buf.getvalue()

    def normalized_oscillations(self) -> np.ndarray:
        return np.array([r.osc_q / math.sqrt(1 + r.omega.norm() ** 2) for r in self.rows if r.error is None])


def correction_sup(tilted: TiltedField) -> float:
    """sup |p - mean p|; the mean itself moves with the integer normalization."""
    p = tilted.p.values
    return float(np.max(np.abs(p - p.mean())))


def sweep(omegas: Sequence[RotationVector], operator_for: Callable[[int], EllipticOperator], params: FlowParams,
          potential: Potential, window: int = 3, cube_side: float = 1.0) -> SweepReport:
    """find_minimizer for each omega on a grid of period N = denominator; failures are recorded, not raised."""
    report = SweepReport()
    for omega in omegas:
        N = omega.denominator
        try:
            op = operator_for(N)
            tilted, info = find_minimizer(omega, op, params, potential)
            center = np.full(op.grid.dim, cube_side / 2)
            report.rows.append(SweepRow(
                omega=omega, N=N, residual=info.residual,
                birkhoff_ok=birkhoff_check(tilted, window).ok,
                osc_q=oscillation(tilted, center, cube_side),
                sup_p=correction_sup(tilted),
                energy_per_cell=info.energy / op.grid.volume,
                converged=info.converged, minimizer=tilted,
            ))
        except (ValueError, RuntimeError, FloatingPointError) as exc:
            report.rows.append(SweepRow(omega, N, math.nan, False, math.nan, math.nan, math.nan, False, error=str(exc)))
    return report
