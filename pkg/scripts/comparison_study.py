"""Minimum ordered-pair gap as gamma drops below the comparison threshold sup|V22|.

Above the threshold the gap must stay nonnegative; below it the run is exploratory
and simply records whatever the flow does.
"""
import argparse
import csv
import sys
from dataclasses import dataclass, field

import numpy as np

from fracflow import ETD1, Grid, EllipticOperator, FlowParams, check_comparison, parse_coefficients, pendulum, sup_v22
from fracflow.cli import ordered_pair


@dataclass
class StudyConfig:
    eps: float = 0.2
    n: int = 64
    coeff: str = "expr:1+0.5*sin(2*pi*x)"
    dt: float = 1e-2
    horizon: float = 2.0
    pairs: int = 20
    amplitude: float = 2.0
    gamma_factors: list = field(default_factory=lambda: [0.05, 0.1, 0.25, 0.5, 1.0, 1.1, 2.0])
    seed: int = 0


def run(cfg: StudyConfig):
    op = EllipticOperator(Grid(1, 1, cfg.n), parse_coefficients(cfg.coeff, 1))
    pot = pendulum(cfg.eps)
    bound = sup_v22(pot, 1)
    rows = []
    for factor in cfg.gamma_factors:
        params = FlowParams(gamma=factor * bound, dt=cfg.dt)
        rng = np.random.default_rng(cfg.seed)
        gaps = []
        for _ in range(cfg.pairs):
            u0, v0 = ordered_pair(op, rng, cfg.amplitude)
            rep = check_comparison(u0, v0, ETD1, op, params, pot, cfg.horizon, exploratory=True)
            gaps.append(rep.min_gap)
        rows.append({"gamma_over_bound": factor, "gamma": params.gamma, "min_gap": min(gaps),
                     "violations": sum(g < -1e-8 for g in gaps)})
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--eps", type=float, default=StudyConfig.eps)
    parser.add_argument("--pairs", type=int, default=StudyConfig.pairs)
    parser.add_argument("--seed", type=int, default=StudyConfig.seed)
    args = parser.parse_args()
    rows = run(StudyConfig(eps=args.eps, pairs=args.pairs, seed=args.seed))
    writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


if __name__ == "__main__":
    main()
