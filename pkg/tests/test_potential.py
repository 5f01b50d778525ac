import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracflow.field import Field, constant_field
from fracflow.potential import (FlowParams, auto_gamma, core_map, from_expressions, l_infinity_bound_check,
                                modulated, parse_potential, pendulum, sup_v22, x_apply, zero)

from conftest import make_op

POTENTIALS = {
    "pendulum": lambda: pendulum(0.2),
    "modulated": lambda: parse_potential("modulated:0.1,1+0.5*cos(2*pi*x)", 1),
    "expr": lambda: parse_potential("expr:0.1*sin(2*pi*y)**2,0.2*pi*sin(4*pi*y),0.8*pi**2*cos(4*pi*y)", 1),
}


def test_sup_v22_examples():
    assert sup_v22(zero(), 1) == 0.0
    assert sup_v22(parse_potential("expr:cos(2*pi*y),-2*pi*sin(2*pi*y),-4*pi**2*cos(2*pi*y)", 1), 1) == \
        pytest.approx(4 * math.pi**2, rel=1e-10)
    mod = modulated(0.1, lambda x1, x2: np.cos(2 * np.pi * x1))
    assert sup_v22(mod, 2) == pytest.approx(0.4 * math.pi**2, rel=1e-10)


def test_sup_v22_polishes_off_grid_maximum():
    # maximum of |V22| at y = 0.013, between samples
    p = from_expressions("0", "0", "cos(2*pi*(y-0.013))", dim=1)
    assert sup_v22(p, 1, grid_samples=8) == pytest.approx(1.0, abs=1e-8)


def test_sup_v22_requires_bound_when_not_periodic():
    p = from_expressions("y**4", "4*y**3", "12*y**2", dim=1, periodic_in_y=False)
    with pytest.raises(ValueError):
        sup_v22(p, 1)
    bounded = from_expressions("y**4", "4*y**3", "12*y**2", dim=1, periodic_in_y=False, v22_bound=12.0)
    assert sup_v22(bounded, 1) == 12.0


def test_auto_gamma_rule():
    assert auto_gamma(pendulum(0.05), 1) == pytest.approx(1.1 * 0.05 * 4 * math.pi**2 + 0.1)
    assert auto_gamma(zero(), 1) == pytest.approx(0.1)


def test_parse_potential_errors():
    with pytest.raises(ValueError):
        parse_potential("bogus:1", 1)
    with pytest.raises(ValueError):
        parse_potential("expr:y,1", 1)


@pytest.mark.parametrize("name", POTENTIALS)
def test_periodicity(name):
    p = POTENTIALS[name]()
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, size=(50, 1))
    y = rng.uniform(-2, 2, size=50)
    assert np.allclose(p.value(x + 1, y), p.value(x, y), atol=1e-12)
    assert np.allclose(p.value(x, y + 1), p.value(x, y), atol=1e-12)


@pytest.mark.parametrize("name", POTENTIALS)
def test_derivatives_second_order(name):
    p = POTENTIALS[name]()
    x = np.array([[0.3], [0.71]])
    y = np.array([0.17, -0.4])
    errs = []
    for h in (1e-3, 1e-4):
        fd1 = (p.value(x, y + h) - p.value(x, y - h)) / (2 * h)
        fd2 = (p.d1(x, y + h) - p.d1(x, y - h)) / (2 * h)
        errs.append((np.max(np.abs(fd1 - p.d1(x, y))), np.max(np.abs(fd2 - p.d2(x, y)))))
    for k in range(2):
        order = math.log10(errs[0][k] / errs[1][k])
        assert order >= 1.9


def test_x_apply_examples():
    op = make_op(n=32)
    params = FlowParams(gamma=4.0, beta=0.5)
    one = constant_field(op.grid, 1.0)
    assert np.allclose(x_apply(op, params, one, zero()).values, 2.0, rtol=1e-14, atol=0)
    c = 0.3
    p = pendulum(0.1)
    expected = 4.0**-0.5 * (4.0 * c - 0.1 * 2 * math.pi * math.sin(2 * math.pi * c))
    assert np.allclose(x_apply(op, params, constant_field(op.grid, c), p).values, expected, rtol=1e-13, atol=0)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.01, 0.05, 0.2]))
def test_x_apply_comparison(seed, eps):
    op = make_op(n=32)
    pot = pendulum(eps)
    params = FlowParams(gamma=auto_gamma(pot, 1), beta=0.5)
    rng = np.random.default_rng(seed)
    v = Field(op.grid, rng.uniform(-2, 2, op.grid.size))
    u = v.with_values(v.values + np.abs(rng.standard_normal(op.grid.size)))
    assert np.all(x_apply(op, params, u, pot).values >= x_apply(op, params, v, pot).values - 1e-9)


@given(st.floats(-3, 3), st.floats(1e-3, 1.0))
def test_core_map_monotone(y, dy):
    pot = pendulum(0.2)
    gamma = sup_v22(pot, 1)
    x = np.zeros((1, 1))
    lo = core_map(np.array([y]), x, gamma, pot)
    hi = core_map(np.array([y + dy]), x, gamma, pot)
    assert hi[0] >= lo[0] - 1e-12


def test_l_infinity_bounds():
    op = make_op(n=32)
    params = FlowParams(gamma=4.0, beta=0.5)
    rep = l_infinity_bound_check(op, constant_field(op.grid, 1.0), params, zero())
    assert rep.x_norm == pytest.approx(2.0) and rep.x_bound == pytest.approx(2.0)
    assert rep.semigroup[0][1] == pytest.approx(rep.semigroup[0][2])
    rng = np.random.default_rng(0)
    for pot in (zero(), pendulum(0.1)):
        u = Field(op.grid, rng.uniform(-1, 1, op.grid.size))
        rep = l_infinity_bound_check(op, u, params, pot)
        assert rep.ok


def test_flow_params_validation():
    with pytest.raises(ValueError):
        FlowParams(gamma=0.0)
    with pytest.raises(ValueError):
        FlowParams(gamma=1.0, beta=1.0)
    assert FlowParams(gamma=1.0, beta=0.3).lam == pytest.approx(0.7)
