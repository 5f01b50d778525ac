import math

import numpy as np
import pytest

from fracflow.field import Field, constant_field, field_from_fn
from fracflow.operator import band_limited_field, frac_power_apply, semigroup_apply
from fracflow.oracles import (QuadratureError, QuadratureSpec, balakrishnan_apply, gamma_function_apply,
                              heat_kernel_apply, identity_operator, log_gauss_legendre, stable_density_half,
                              subordination_apply, subordination_mass)
from fracflow.suites import run_suites

from conftest import make_op

ORACLES = [balakrishnan_apply, gamma_function_apply]


def test_log_gauss_legendre_integrates_power():
    x, w = log_gauss_legendre(1e-3, 1e2, 80)
    assert np.sum(w * x**-0.5) == pytest.approx(2 * (1e2**0.5 - 1e-3**0.5), rel=1e-12)


@pytest.mark.parametrize("oracle", ORACLES, ids=lambda f: f.__name__)
def test_constant_field(oracle):
    op = make_op(n=16)
    out = oracle(op, 4.0, 0.5, constant_field(op.grid, 1.0))
    assert np.max(np.abs(out.field.values - 0.5)) < 1e-8


@pytest.mark.parametrize("oracle", ORACLES, ids=lambda f: f.__name__)
@pytest.mark.parametrize("spec", [dict(n=32, coeff="expr:1+0.5*sin(2*pi*x)"), dict(dim=2, n=8, coeff="diag:1,2"),
                                  dict(n=32, alpha=0.5), dict(n=16, disc="fourier"), dict(n=16, bc="dirichlet")],
                         ids=str)
def test_agreement_with_spectral_route(oracle, spec, rng):
    op = make_op(**spec)
    for beta in (0.25, 0.5, 0.75):
        u = band_limited_field(op, rng)
        ref = frac_power_apply(op, 0.7, -beta, u).values
        out = oracle(op, 0.7, beta, u)
        assert np.max(np.abs(out.field.values - ref)) <= 1e-6 * np.max(np.abs(ref))


@pytest.mark.parametrize("oracle", ORACLES, ids=lambda f: f.__name__)
def test_small_beta_continuity(oracle, rng):
    op = make_op(n=32)
    u = band_limited_field(op, rng)
    out = oracle(op, 1.0, 0.01, u).field.values
    assert np.max(np.abs(out - frac_power_apply(op, 1.0, -0.01, u).values)) < 1e-4
    assert np.max(np.abs(out - u.values)) < 0.1


def test_batched_input_matches_single(rng):
    op = make_op(n=16)
    us = [band_limited_field(op, rng) for _ in range(3)]
    batch = balakrishnan_apply(op, 1.0, 0.5, us).field
    for u, b in zip(us, batch):
        single = balakrishnan_apply(op, 1.0, 0.5, u).field
        assert np.max(np.abs(single.values - b.values)) < 1e-13


def test_unreachable_tolerance_raises():
    op = make_op(n=16)
    quad = QuadratureSpec(nodes=16, tol=1e-15, max_doublings=0)
    with pytest.raises(QuadratureError):
        balakrishnan_apply(op, 1.0, 0.5, band_limited_field(op, np.random.default_rng(0)), quad)


def test_stable_density_nonnegative_and_normalized():
    tau = np.logspace(-8, 4, 200)
    for t in (0.1, 1.0, 3.0):
        assert np.all(stable_density_half(t, tau) >= 0)
        assert abs(subordination_mass(t) - 1) < 1e-8


def test_subordination_constant():
    op = make_op(n=16)
    out = subordination_apply(op, 4.0, 1.0, constant_field(op.grid, 1.0))
    assert np.max(np.abs(out.field.values - math.exp(-2))) < 1e-6


def test_subordination_random_fields(rng):
    op = make_op(n=32, coeff="expr:1+0.5*sin(2*pi*x)")
    for t in (0.1, 1.0):
        u = band_limited_field(op, rng)
        out = subordination_apply(op, 1.3, t, u).field.values
        assert np.max(np.abs(out - semigroup_apply(op, 1.3, 0.5, t, u).values)) < 1e-6


def test_subordination_rejects_nonpositive_time():
    op = make_op(n=8)
    with pytest.raises(ValueError):
        subordination_apply(op, 1.0, 0.0, constant_field(op.grid, 1.0))


def test_heat_kernel_examples():
    from fracflow.field import Grid

    g = Grid(1, 1, 64)
    one = constant_field(g, 1.0)
    assert np.max(np.abs(heat_kernel_apply(g, 0.3, one).values - 1)) < 1e-12
    s = field_from_fn(g, lambda x: np.sin(2 * np.pi * x))
    out = heat_kernel_apply(g, 0.1, s).values
    assert np.max(np.abs(out - math.exp(-4 * np.pi**2 * 0.1) * s.values)) < 1e-8


@pytest.mark.parametrize("dim,n,N", [(1, 64, 1), (1, 32, 2), (2, 16, 1)])
def test_heat_kernel_delta_matches_fourier(dim, n, N):
    from fracflow.field import Grid

    g = Grid(dim, N, n)
    fourier = identity_operator(g)
    delta = np.zeros(g.size)
    delta[g.size // 2] = 1 / g.cell_volume
    u = Field(g, delta)
    for t in (0.01, 0.1):
        direct = heat_kernel_apply(g, t, u).values
        spectral = math.exp(t) * semigroup_apply(fourier, 1.0, 1.0, t, u).values
        assert np.max(np.abs(direct - spectral)) < 1e-8


def test_heat_kernel_rejects_bad_time():
    from fracflow.field import Grid

    g = Grid(1, 1, 8)
    with pytest.raises(ValueError):
        heat_kernel_apply(g, 0.0, constant_field(g, 1.0))


def test_verify_suites_default_config_pass():
    op = make_op(n=64)
    checks = run_suites(op, 2.27, 0.5, seed=0, count=5)
    assert checks and all(c.passed for c in checks if c.asserted)


def test_verify_only_and_tolerance_override():
    op = make_op(n=16)
    checks = run_suites(op, 1.0, 0.5, seed=0, only="subordination", count=2, tolerance=1e-20)
    assert {c.suite for c in checks} == {"subordination"}
    assert any(not c.passed for c in checks)
    with pytest.raises(ValueError):
        run_suites(op, 1.0, 0.5, seed=0, only="nonsense")


def test_positivity_only_reported_for_mixed_stencil():
    op = make_op(dim=2, n=8, coeff="matrix:1,0.4,1")
    checks = run_suites(op, 1.0, 0.5, seed=0, only="positivity", count=3)
    assert checks and not any(c.asserted for c in checks)
