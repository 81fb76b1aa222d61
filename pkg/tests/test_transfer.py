import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfseries import galerkin, maps, transfer
from pfseries.checks import pairing_rule, random_smooth_field
from pfseries.quadrature import AdaptiveIntegrator, integrate, integrate_adaptive, l2_norm, make_fixed_rule
from pfseries.transfer import Field, constant

TENT = maps.tent()


def _poly(rng, deg=4):
    c = rng.standard_normal(deg + 1)
    return Field(lambda x: np.polyval(c, x), 1, name="poly")


def _interior(m, n, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(m.domain.lo), np.asarray(m.domain.hi)
    pts = lo + (hi - lo) * (1e-6 + (1 - 2e-6) * rng.random((n, m.dim)))
    return pts[:, 0] if m.dim == 1 else pts


def test_pf_of_constant_and_identity():
    x = np.linspace(0, 1, 11)
    assert np.allclose(transfer.apply_pf(TENT, constant(1.0))(x), 1.0)
    assert np.allclose(transfer.apply_pf(TENT, Field(lambda t: t, 1))(x), 0.5)


def test_circle_pf_is_pullback():
    m = maps.circle_boundary()
    f0 = transfer.circle_f0()
    x = _interior(m, 50, seed=1)
    assert np.allclose(transfer.apply_pf(m, f0)(x), f0(maps.inverse(m, x)))


def test_koopman_examples():
    m = maps.standard_map()
    assert np.allclose(transfer.apply_koopman(m, constant(3.0, 2))(_interior(m, 10)), 3.0)
    part = galerkin.Partition(m.domain, (4, 4))
    lo, hi = part.cell_bounds(5)
    ind = Field(lambda x: np.all((x >= lo) & (x < hi), axis=-1).astype(float), 2)
    x = _interior(m, 100, seed=2)
    fx = maps.forward(m, x)
    expect = np.all((fx >= lo) & (fx < hi), axis=-1)
    assert np.array_equal(transfer.apply_koopman(m, ind)(x) == 1.0, expect)


def test_tent_duality_polynomials():
    rng = np.random.default_rng(3)
    rule = pairing_rule(TENT)
    for _ in range(10):
        u, v = _poly(rng), _poly(rng)
        lhs = integrate(rule, lambda x: transfer.apply_pf(TENT, u)(x) * v(x))
        rhs = integrate(rule, lambda x: u(x) * transfer.apply_koopman(TENT, v)(x))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("case", [transfer.SMOOTH_EXP, transfer.SINGULAR])
def test_manufactured_residual_vanishes(case):
    u, f0 = transfer.manufactured(case, 0.5)
    prob = transfer.DampedProblem(TENT, 0.5, f0)
    x = _interior(TENT, 1000, seed=4)
    tol = 1e-12 if case == transfer.SMOOTH_EXP else 1e-10
    assert np.max(np.abs(transfer.residual(prob, u)(x))) <= tol


def test_residual_of_zero_is_f0():
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    x = _interior(TENT, 20)
    assert np.allclose(transfer.residual(prob, constant(0.0))(x), prob.f0(x))


def test_manufactured_values():
    _, f0 = transfer.manufactured(transfer.SMOOTH_EXP, 0.5)
    assert float(f0(0.0)) == pytest.approx(1 - 0.25 - 0.25 * np.e, abs=1e-15)
    u, _ = transfer.manufactured(transfer.SINGULAR, 0.3)
    assert float(u(1.0)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        transfer.manufactured(transfer.SMOOTH_EXP, 1.0)
    with pytest.warns(UserWarning):
        transfer.manufactured(transfer.SMOOTH_EXP, 0.6)


def test_problem_validation():
    with pytest.raises(ValueError):
        transfer.DampedProblem(TENT, 0.0, constant(1.0))
    with pytest.raises(ValueError):
        transfer.DampedProblem(TENT, 0.5, constant(1.0), p_exponent=1.0)
    with pytest.raises(ValueError):
        transfer.make_problem("nope", 0.5)


def test_series_examples():
    prob, _ = transfer.make_problem(transfer.UNIT, 0.5)
    x = _interior(TENT, 30)
    assert np.allclose(transfer.truncated_series(prob, 0)(x), 1.0)
    assert np.allclose(transfer.truncated_series(prob, 20)(x), 2 - 2.0 ** -20, atol=1e-14)
    with pytest.raises(ValueError):
        transfer.truncated_series(prob, -1)


def test_tent_series_grid_path_matches_direct():
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    x = _interior(TENT, 50, seed=5)
    direct = transfer.truncated_series(prob, 12)(x)
    grid = transfer.truncated_series(prob, 12, transfer.SeriesOptions(direct_max_terms=5))(x)
    assert np.max(np.abs(direct - grid)) < 1e-6


def test_series_budget_guard():
    prob, _ = transfer.make_problem(transfer.CIRCLE_F0, 0.5)
    field = transfer.truncated_series(prob, 100, transfer.SeriesOptions(budget=1e3))
    with pytest.raises(transfer.SeriesBudgetError):
        field(_interior(prob.map, 50))


@pytest.mark.parametrize("N", [5, 10, 20])
def test_circle_series_residual_bound(N):
    prob, _ = transfer.make_problem(transfer.CIRCLE_F0, 0.5)
    rule = make_fixed_rule(prob.map.domain, 101)
    uN = transfer.truncated_series(prob, N)
    res = l2_norm(rule, transfer.residual(prob, uN))
    assert res <= 0.5 ** (N + 1) * l2_norm(rule, prob.f0) + 1e-8


def test_series_tail_bound():
    prob, _ = transfer.make_problem(transfer.CIRCLE_F0, 0.5)
    rule = make_fixed_rule(prob.map.domain, 61)
    N = 6
    gap = l2_norm(rule, transfer.truncated_series(prob, N) - transfer.truncated_series(prob, 2 * N))
    assert gap <= 0.5 ** (N + 1) * l2_norm(rule, prob.f0) / 0.5


def test_bilinear_examples():
    prob, _ = transfer.make_problem(transfer.UNIT, 0.5)
    rule = make_fixed_rule(TENT.domain, 10)
    one = constant(1.0)
    assert transfer.bilinear_b(prob, one, one, rule) == pytest.approx(0.5)
    assert transfer.bilinear_b(prob, one, one, rule, form="koopman") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        transfer.bilinear_b(prob, one, one, rule, form="other")


@pytest.mark.parametrize("map_id", maps.MAP_IDS)
def test_forms_agree_and_constants_hold(map_id):
    m = maps.make_map(map_id)
    prob = transfer.DampedProblem(m, 0.5, constant(1.0, m.dim))
    rule = pairing_rule(m)
    rng = np.random.default_rng(6)
    for _ in range(5):
        u, v = random_smooth_field(m, rng), random_smooth_field(m, rng)
        pf = transfer.bilinear_b(prob, u, v, rule, "pf")
        kp = transfer.bilinear_b(prob, u, v, rule, "koopman")
        nu, nv = l2_norm(rule, u), l2_norm(rule, v)
        assert abs(pf - kp) <= 1e-8 * nu * nv
        assert transfer.bilinear_b(prob, u, u, rule) >= 0.5 * nu ** 2 - 1e-8
        assert abs(pf) <= 1.5 * nu * nv + 1e-8
        # non-expansiveness of the transfer operator
        assert l2_norm(rule, transfer.apply_pf(m, u)) <= nu * (1 + 1e-8)


def test_linear_l_examples():
    prob, _ = transfer.make_problem(transfer.UNIT, 0.5)
    rule = make_fixed_rule(TENT.domain, 8, 4)
    assert transfer.linear_l(prob, constant(1.0), rule) == pytest.approx(1.0)
    basis = galerkin.indicator_basis(TENT.domain, (4,))
    assert transfer.linear_l(prob, basis.function(1), rule) == pytest.approx(np.sqrt(0.25))
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    ref = integrate_adaptive(AdaptiveIntegrator(rel_tol=1e-13), TENT.domain,
                             lambda x: prob.f0(x) * np.exp(x)).value
    assert transfer.linear_l(prob, Field(np.exp, 1), make_fixed_rule(TENT.domain, 101)) == \
        pytest.approx(ref, abs=1e-8)


def test_a_posteriori_bound():
    prob, u = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    rule = make_fixed_rule(TENT.domain, 101, 2)
    rng = np.random.default_rng(8)
    for _ in range(10):
        cand = u + _poly(rng, 3) * 0.1
        err = l2_norm(rule, u - cand)
        assert 0.5 * err <= l2_norm(rule, transfer.residual(prob, cand)) + 1e-8


def test_nonnegativity_warning():
    prob = transfer.DampedProblem(TENT, 0.5, constant(-1.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert not prob.check_nonnegative(make_fixed_rule(TENT.domain, 5))
    assert caught


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-10, 10), alpha=st.floats(0.01, 0.99))
def test_constant_solution_property(c, alpha):
    # the tent transfer operator fixes constants, so u = c / (1 - alpha)
    prob = transfer.DampedProblem(TENT, alpha, constant(c))
    x = np.linspace(0.01, 0.99, 7)
    r = transfer.residual(prob, constant(c / (1 - alpha)))(x)
    assert np.max(np.abs(r)) <= 1e-12 * max(1.0, abs(c) / (1 - alpha))


def test_field_arithmetic():
    f = Field(lambda x: x, 1, name="x")
    g = 2 * f + 1 - f * f
    assert float(g(3.0)) == pytest.approx(-2.0)
    assert float((-f)(2.0)) == -2.0
    with pytest.raises(ValueError):
        Field(np.exp, 1, tag="bogus")
