"""Run configuration: INI-style key = value text with sections."""

from __future__ import annotations

import configparser
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from .field import Boundary, Grid
from .operator import EllipticOperator, parse_coefficients
from .potential import FlowParams, Potential, auto_gamma, parse_potential


@dataclass
class GridSpec:
    d: int = 1
    N: int = 1
    n: int = 64
    bc: str = "periodic"


@dataclass
class OperatorSpec:
    coeff: str = "identity"
    alpha: float = 1.0
    discretization: str = "fd"


@dataclass
class PotentialSpec:
    potential: str = "pendulum:0.05"


@dataclass
class FlowSpec:
    gamma: Union[str, float] = "auto"
    beta: float = 0.5
    dt: float = 1e-2
    t_end: float = 5.0
    tol_residual: float = 1e-8
    scheme: str = "etd1"
    u0: str = "random"
    amplitude: float = 1.0


@dataclass
class CompareSpec:
    pairs: int = 200
    horizon: float = 2.0
    exploratory: bool = False


@dataclass
class MinimizeSpec:
    omega: str = "1/2"
    window: int = 3
    t_end: float = 200.0
    snapshot_every: int = 5


@dataclass
class SweepSpec:
    levels: int = 4
    omegas: str = ""
    cube_side: float = 1.0


@dataclass
class VerifySpec:
    only: str = ""
    tolerance: Optional[float] = None
    fields: int = 20


@dataclass
class RunSpec:
    seed: int = 0
    out: str = "runs/default"


SECTIONS = {
    "grid": GridSpec,
    "operator": OperatorSpec,
    "potential": PotentialSpec,
    "flow": FlowSpec,
    "compare": CompareSpec,
    "minimize": MinimizeSpec,
    "sweep": SweepSpec,
    "verify": VerifySpec,
    "run": RunSpec,
}


@dataclass
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    operator: OperatorSpec = field(default_factory=OperatorSpec)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    flow: FlowSpec = field(default_factory=FlowSpec)
    compare: CompareSpec = field(default_factory=CompareSpec)
    minimize: MinimizeSpec = field(default_factory=MinimizeSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    run: RunSpec = field(default_factory=RunSpec)

    # -- building domain objects ---------------------------------------

    def build_grid(self, period: Optional[int] = None) -> Grid:
        g = self.grid
        return Grid(g.d, period or g.N, g.n, Boundary(g.bc))

    def build_operator(self, period: Optional[int] = None) -> EllipticOperator:
        grid = self.build_grid(period)
        o = self.operator
        return EllipticOperator(grid, parse_coefficients(o.coeff, grid.dim), o.alpha, o.discretization)

    def build_potential(self) -> Potential:
        return parse_potential(self.potential.potential, self.grid.d)

    def resolved_gamma(self) -> float:
        g = self.flow.gamma
        if isinstance(g, str) and g.strip().strip('"') == "auto":
            return auto_gamma(self.build_potential(), self.grid.d)
        return float(g)

    def build_params(self, t_end: Optional[float] = None) -> FlowParams:
        f = self.flow
        return FlowParams(gamma=self.resolved_gamma(), beta=f.beta, dt=f.dt,
                          t_end=f.t_end if t_end is None else t_end, tol_residual=f.tol_residual)

    def to_dict(self, resolve: bool = True) -> dict:
        out = {name: asdict(getattr(self, name)) for name in SECTIONS}
        if resolve:
            out["flow"]["gamma"] = self.resolved_gamma()
        return out


def _coerce(value: str, target_type, name: str):
    value = value.strip().strip('"')
    if target_type is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {value!r}")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type == Optional[float]:
        return None if value.lower() in ("", "none") else float(value)
    if target_type == Union[str, float]:
        try:
            return float(value)
        except ValueError:
            return value
    return value


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys such as N are case-sensitive
    parser.read_string(text)
    config = RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        spec = getattr(config, section)
        hints = typing.get_type_hints(type(spec))
        for key, raw in parser.items(section):
            if section == "operator" and key == "bc":
                config.grid.bc = raw.strip().strip('"')
                continue
            if key not in hints:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            setattr(spec, key, _coerce(raw, hints[key], f"{section}.{key}"))
    return config


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: RunConfig) -> str:
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in asdict(getattr(config, name)).items():
            lines.append(f"{key} = {'none' if value is None else value}")
        lines.append("")
    return "\n".join(lines)
