import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfseries import galerkin, maps, network as nw, transfer
from pfseries.checks import fd_losses, gradient_fd_error, kink_avoiding_params
from pfseries.losses import LossSpec, make_loss, sup_form_check
from pfseries.quadrature import l2_norm, lp_norm, make_fixed_rule

TENT = maps.tent()


@pytest.fixture(scope="module")
def smooth():
    prob, u = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    return prob, u, make_fixed_rule(TENT.domain, 41)


def test_spec_validation(smooth):
    prob, _, rule = smooth
    with pytest.raises(ValueError):
        LossSpec("vpinns", rule)
    with pytest.raises(ValueError):
        LossSpec("rvpinns", rule)
    with pytest.raises(ValueError):
        LossSpec("rvpinns", rule, test_basis=galerkin.hat_basis(TENT.domain, 4))
    basis = galerkin.indicator_basis(TENT.domain, (4,))
    with pytest.raises(ValueError):
        LossSpec("rvpinns", rule, p=3.0, test_basis=basis)
    with pytest.raises(ValueError):
        LossSpec("pinns", rule, p=1.0)
    loss = make_loss(prob, "pinns", rule)
    with pytest.raises(ValueError):
        loss.value(nw.init_random_2d(3, maps.circle_boundary().domain))


def test_pinns_value_is_residual_norm(smooth):
    prob, _, rule = smooth
    p = nw.fit_outer(nw.init_uniform_breakpoints(6), prob, rule)
    res = transfer.residual(prob, nw.as_field(p))
    assert make_loss(prob, "pinns", rule).value(p) == pytest.approx(l2_norm(rule, res), rel=1e-12)
    assert make_loss(prob, "pinns", rule, p=3.0).value(p) == pytest.approx(lp_norm(rule, res, 3.0), rel=1e-12)


def test_pinns_zero_at_exact_solution():
    prob, _ = transfer.make_problem(transfer.UNIT, 0.5)
    rule = make_fixed_rule(TENT.domain, 11)
    p = nw.NetParams(np.ones((1, 1)), [0.0], [0.0], 2.0)
    loss = make_loss(prob, "pinns", rule)
    assert loss.value(p) == pytest.approx(0.0, abs=1e-14)
    v, g = loss.value_and_grad(p)
    assert v == 0.0 and np.all(g == 0.0)


def test_rvpinns_value_is_tested_residual_norm(smooth):
    prob, _, _ = smooth
    basis = galerkin.indicator_basis(TENT.domain, (8,))
    rule = basis.aligned_rule(8, 2)
    p = nw.fit_outer(nw.init_uniform_breakpoints(5), prob, rule)
    u = nw.as_field(p)
    r = [transfer.linear_l(prob, g, rule) - transfer.bilinear_b(prob, u, g, rule) for g in basis.functions]
    loss = make_loss(prob, "rvpinns", rule, test_basis=basis)
    assert loss.value(p) == pytest.approx(np.linalg.norm(r), rel=1e-12)


@pytest.mark.parametrize("name_loss", fd_losses(), ids=lambda t: t[0])
def test_gradients_match_finite_differences(name_loss):
    _, loss = name_loss
    rng = np.random.default_rng(0)
    for _ in range(3):
        p = kink_avoiding_params(loss, 5, rng)
        assert gradient_fd_error(loss, p) < 1e-5


@pytest.mark.parametrize("path", ["pf", "koopman"])
def test_exact_gradient_matches_finite_differences(path):
    prob, _ = transfer.make_problem(transfer.CIRCLE_F0, 0.5)
    basis = galerkin.indicator_basis(prob.map.domain, (4, 4))
    loss = make_loss(prob, "rvpinns", basis.aligned_rule(4, 1), test_basis=basis,
                     rvpinns_path=path, integration="exact")
    p = nw.init_random_2d(4, prob.map.domain, 1)
    p.outer_weights = np.array([1.0, -0.5, 0.3, 2.0])
    assert gradient_fd_error(loss, p) < 1e-5


def test_pinns_general_p_gradient():
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    loss = make_loss(prob, "pinns", make_fixed_rule(TENT.domain, 31), p=3.0)
    p = kink_avoiding_params(loss, 4, np.random.default_rng(2))
    assert gradient_fd_error(loss, p) < 1e-5


def test_squared_gradient_consistent(smooth):
    prob, _, rule = smooth
    loss = make_loss(prob, "pinns", rule)
    p = kink_avoiding_params(loss, 4, np.random.default_rng(3))
    v, g = loss.value_and_grad(p)
    sq, gs = loss.squared_and_grad(p)
    assert sq == pytest.approx(v * v, rel=1e-12)
    assert np.allclose(gs, 2 * v * g)


@pytest.mark.parametrize("integration", ["quadrature", "exact"])
def test_sup_form_matches_loss(integration):
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    basis = galerkin.indicator_basis(TENT.domain, (8,))
    loss = make_loss(prob, "rvpinns", basis.aligned_rule(8, 2), test_basis=basis, integration=integration)
    p = nw.fit_outer(nw.init_uniform_breakpoints(5), prob, basis.aligned_rule(8, 2))
    p.inner_biases = p.inner_biases + 0.013
    res = sup_form_check(loss, p, probe_count=30)
    assert res.supremizer_ratio == pytest.approx(res.loss, rel=1e-10)
    assert res.max_probe_ratio <= res.loss * (1 + 1e-10)


def test_sup_form_needs_rvpinns(smooth):
    prob, _, rule = smooth
    with pytest.raises(ValueError):
        sup_form_check(make_loss(prob, "pinns", rule), nw.init_uniform_breakpoints(2))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_exact_forms_agree_property(seed):
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    basis = galerkin.indicator_basis(TENT.domain, (8,))
    rule = basis.aligned_rule(4, 1)
    pf = make_loss(prob, "rvpinns", rule, test_basis=basis, integration="exact")
    kp = make_loss(prob, "rvpinns", rule, test_basis=basis, integration="exact", rvpinns_path="koopman")
    rng = np.random.default_rng(seed)
    p = nw.NetParams(rng.normal(0, 3, (4, 1)), rng.standard_normal(4), rng.standard_normal(4), 0.3)
    a, b = pf.value(p), kp.value(p)
    assert abs(a - b) <= 1e-10 * max(a, 1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-5, 5))
def test_loss_nonnegative_and_shift_sensitive(seed, shift):
    prob, _ = transfer.make_problem(transfer.UNIT, 0.5)
    rule = make_fixed_rule(TENT.domain, 9)
    loss = make_loss(prob, "pinns", rule)
    # for constant u = c the residual is 1 - (1 - alpha) c everywhere
    p = nw.NetParams(np.ones((1, 1)), [0.0], [0.0], shift)
    assert loss.value(p) == pytest.approx(abs(1 - 0.5 * shift), rel=1e-12, abs=1e-14)


def test_zero_network_losses(smooth):
    prob, _, rule = smooth
    zero = nw.NetParams(np.ones((2, 1)), [0.0, -0.5], [0.0, 0.0], 0.0)
    assert make_loss(prob, "pinns", rule).value(zero) == pytest.approx(l2_norm(rule, prob.f0), rel=1e-12)
    basis = galerkin.indicator_basis(TENT.domain, (8,))
    arule = basis.aligned_rule(8, 2)
    proj = galerkin.l2_projection(basis, prob.f0, arule)
    loss = make_loss(prob, "rvpinns", arule, test_basis=basis)
    assert loss.value(zero) == pytest.approx(np.linalg.norm(proj), rel=1e-12)


def test_fit_outer_pinns_loss_small(smooth):
    prob, _, _ = smooth
    rule = make_fixed_rule(TENT.domain, 101)
    p = nw.fit_outer(nw.init_uniform_breakpoints(32), prob, rule)
    assert make_loss(prob, "pinns", rule).value(p) < 1e-2


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_projection_contraction(seed):
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    basis = galerkin.indicator_basis(TENT.domain, (8,))
    rule = basis.aligned_rule(13, 1)
    rng = np.random.default_rng(seed)
    p = nw.NetParams(rng.normal(0, 3, (5, 1)), rng.standard_normal(5), rng.standard_normal(5), 0.1)
    rv = make_loss(prob, "rvpinns", rule, test_basis=basis).value(p)
    assert rv <= make_loss(prob, "pinns", rule).value(p) + 1e-8


def test_sup_form_at_exact_solution():
    prob, _ = transfer.make_problem(transfer.UNIT, 0.5)
    basis = galerkin.indicator_basis(TENT.domain, (8,))
    loss = make_loss(prob, "rvpinns", basis.aligned_rule(4, 1), test_basis=basis)
    p = nw.NetParams(np.ones((1, 1)), [0.0], [0.0], 2.0)
    res = sup_form_check(loss, p, probe_count=5)
    assert res.loss == pytest.approx(0.0, abs=1e-14)
    assert res.supremizer_ratio == 0.0
    assert abs(res.max_probe_ratio) <= 1e-13
