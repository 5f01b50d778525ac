"""Plane-like minimizers along the golden-mean convergents 1/2, 2/3, 3/5, 5/8, ...

Prints the sweep table plus the normalized oscillation osc / sqrt(1 + |omega|^2),
which should settle near a constant independent of the period.
"""
import argparse
import math
from dataclasses import dataclass

from fracflow import EllipticOperator, FlowParams, Grid, auto_gamma, golden_convergents, parse_coefficients, pendulum, sweep


@dataclass
class SweepConfig:
    levels: int = 6
    eps: float = 0.05
    n: int = 16
    coeff: str = "identity"
    dt: float = 0.05
    t_end: float = 800.0
    tol: float = 1e-8


def run(cfg: SweepConfig):
    pot = pendulum(cfg.eps)
    params = FlowParams(gamma=auto_gamma(pot, 1), dt=cfg.dt, t_end=cfg.t_end, tol_residual=cfg.tol)
    coeffs = parse_coefficients(cfg.coeff, 1)
    return sweep(golden_convergents(cfg.levels), lambda N: EllipticOperator(Grid(1, N, cfg.n), coeffs), params, pot)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", type=int, default=SweepConfig.levels)
    parser.add_argument("--eps", type=float, default=SweepConfig.eps)
    parser.add_argument("--coeff", default=SweepConfig.coeff)
    args = parser.parse_args()
    report = run(SweepConfig(levels=args.levels, eps=args.eps, coeff=args.coeff))
    print(report.to_csv(), end="")
    print()
    for row in report.rows:
        if row.error is None:
            print(f"{row.omega}: osc/sqrt(1+|w|^2) = {row.osc_q / math.sqrt(1 + row.omega.norm() ** 2):.4f}")
        else:
            print(f"{row.omega}: {row.error}")


if __name__ == "__main__":
    main()
