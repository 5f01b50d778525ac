"""Sobolev-gradient descent flows for semilinear elliptic energies with fractional operators."""

from .aubry_mather import (RotationVector, TiltedField, birkhoff_check, check_equivariance, find_minimizer,
                           golden_convergents, newton_minimizer, sweep)
from .config import RunConfig, load_config, parse_config
from .field import Boundary, Field, Grid, constant_field, field_from_fn, inner_hs, inner_l2, load_field, save_field
from .flow import (ETD1, FlowDivergence, FlowSystem, StepScheme, Trajectory, check_comparison, energy, evolve,
                   linear_flow_closed_form, residual, sobolev_gradient, step)
from .operator import (ConstantCoeff, Discretization, EllipticOperator, VariableCoeff, frac_power_apply,
                       parse_coefficients, semigroup_apply)
from .potential import FlowParams, Potential, auto_gamma, parse_potential, pendulum, sup_v22, x_apply, zero

__version__ = "0.1.0"
