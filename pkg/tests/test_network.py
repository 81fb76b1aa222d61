import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfseries import galerkin, maps, network as nw, transfer
from pfseries.quadrature import make_fixed_rule

TENT = maps.tent()


def _random_params(n, d, seed):
    rng = np.random.default_rng(seed)
    return nw.NetParams(rng.standard_normal((n, d)), rng.standard_normal(n),
                        rng.standard_normal(n), rng.standard_normal())


def test_shapes_and_validation():
    p = _random_params(5, 2, 0)
    assert p.n_hidden == 5 and p.input_dim == 2 and p.n_params == 5 * 4 + 1
    with pytest.raises(ValueError):
        nw.NetParams(np.ones((3, 1)), np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        nw.NetParams(np.ones((3, 3)), np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        nw.NetParams.from_flat(np.ones(4), 5, 1)


def test_evaluate_by_hand():
    p = nw.NetParams([[1.0], [-2.0]], [0.0, 1.0], [3.0, 0.5], 0.25)
    x = np.array([-1.0, 0.2, 1.0])
    expect = 3 * np.maximum(x, 0) + 0.5 * np.maximum(1 - 2 * x, 0) + 0.25
    assert np.allclose(nw.evaluate(p, x), expect)
    assert np.allclose(p.kinks_1d(), [0.0, 0.5])


def test_evaluate_keeps_point_shape():
    p = _random_params(4, 2, 1)
    x = np.random.default_rng(0).random((3, 5, 2))
    assert nw.evaluate(p, x).shape == (3, 5)
    with pytest.raises(ValueError):
        nw.evaluate(p, np.ones((4, 3)))


@pytest.mark.parametrize("d", [1, 2])
def test_grad_params_matches_finite_differences(d):
    p = _random_params(6, d, 2)
    x = np.random.default_rng(3).random((40, d)) if d == 2 else np.random.default_rng(3).random(40)
    J = nw.grad_params(p, x)
    flat = p.to_flat()
    h = 1e-7
    for i in range(p.n_params):
        e = np.zeros_like(flat)
        e[i] = h
        fd = (nw.evaluate(p.with_flat(flat + e), x) - nw.evaluate(p.with_flat(flat - e), x)) / (2 * h)
        assert np.allclose(J[:, i], fd.ravel(), atol=1e-6)


def test_vjp_equals_jacobian_transpose():
    p = _random_params(7, 2, 4)
    x = np.random.default_rng(5).random((30, 2))
    s = np.random.default_rng(6).standard_normal(30)
    assert np.allclose(nw.vjp(p, x, s), nw.grad_params(p, x).T @ s)


def test_flat_and_json_round_trip():
    p = _random_params(3, 2, 7)
    q = nw.NetParams.from_json(p.to_json())
    assert np.array_equal(q.to_flat(), p.to_flat())
    c = p.copy()
    c.outer_weights[0] = 99.0
    assert p.outer_weights[0] != 99.0
    bad = p.with_flat(np.where(np.arange(p.n_params) == 0, np.nan, p.to_flat()))
    assert not bad.is_finite() and p.is_finite()


def test_breakpoint_inits():
    p = nw.init_uniform_breakpoints(4)
    assert np.allclose(p.kinks_1d(), [0, 0.25, 0.5, 0.75])
    g = nw.init_geometric_breakpoints(4, 0.5)
    assert np.allclose(g.kinks_1d(), [0, 0.125, 0.25, 0.5])
    assert np.all(nw.evaluate(p, np.linspace(0, 1, 5)) == 0.0)
    with pytest.raises(ValueError):
        nw.init_geometric_breakpoints(4, 1.0)
    with pytest.raises(ValueError):
        nw.init_uniform_breakpoints(0)


def test_random_2d_init_reproducible_and_inside():
    box = maps.circle_boundary().domain
    a, b = nw.init_random_2d(16, box, 3), nw.init_random_2d(16, box, 3)
    assert np.array_equal(a.to_flat(), b.to_flat())
    assert not np.array_equal(a.to_flat(), nw.init_random_2d(16, box, 4).to_flat())
    norms = np.linalg.norm(a.inner_weights, axis=1)
    assert np.allclose(norms, 16 / box.diameter)


def test_features_reproduce_network():
    p = _random_params(5, 1, 8)
    x = np.linspace(0, 1, 17)
    coef = np.concatenate([p.outer_weights, [p.outer_bias]])
    assert np.allclose(nw.features(p, x) @ coef, nw.evaluate(p, x))


def test_fit_outer_recovers_representable_solution():
    # u = 1/(1-alpha) is the exact solution for f0 = 1 and lies in the span
    prob, u = transfer.make_problem(transfer.UNIT, 0.5)
    rule = make_fixed_rule(TENT.domain, 41)
    p = nw.fit_outer(nw.init_uniform_breakpoints(8), prob, rule, ridge=0.0)
    assert np.allclose(nw.evaluate(p, rule.nodes), 2.0, atol=1e-8)


@pytest.mark.parametrize("path", ["pf", "koopman"])
def test_outer_design_matches_residual(path):
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    rule = make_fixed_rule(TENT.domain, 16, 8)
    basis = galerkin.indicator_basis(TENT.domain, (8,))
    p = _random_params(5, 1, 9)
    T, t = nw.outer_design(p, prob, rule, basis, path)
    coef = np.concatenate([p.outer_weights, [p.outer_bias]])
    u = nw.as_field(p)
    direct = [transfer.linear_l(prob, g, rule) - transfer.bilinear_b(prob, u, g, rule, path)
              for g in basis.functions]
    assert np.allclose(t - T @ coef, direct, atol=1e-10)


def test_fit_outer_does_not_increase_loss():
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    rule = make_fixed_rule(TENT.domain, 41)
    p = _random_params(6, 1, 10)
    T, t = nw.outer_design(p, prob, rule)
    before = np.linalg.norm(t - T @ np.concatenate([p.outer_weights, [p.outer_bias]]))
    q = nw.fit_outer(p, prob, rule)
    after = np.linalg.norm(t - T @ np.concatenate([q.outer_weights, [q.outer_bias]]))
    assert after <= before


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 8), d=st.integers(1, 2), seed=st.integers(0, 10_000))
def test_flat_round_trip_property(n, d, seed):
    p = _random_params(n, d, seed)
    q = nw.NetParams.from_flat(p.to_flat(), n, d)
    assert np.array_equal(q.to_flat(), p.to_flat())


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 10))
def test_positive_homogeneity(seed, scale):
    # scaling (w, b) by s and c by 1/s leaves the network unchanged
    p = _random_params(4, 2, seed)
    q = nw.NetParams(p.inner_weights * scale, p.inner_biases * scale, p.outer_weights / scale, p.outer_bias)
    x = np.random.default_rng(seed).random((10, 2))
    assert np.allclose(nw.evaluate(p, x), nw.evaluate(q, x), atol=1e-10)


def test_spec_evaluation_examples():
    p = nw.NetParams(np.zeros((3, 1)), np.zeros(3), np.zeros(3), 7.0)
    assert np.all(nw.evaluate(p, np.linspace(0, 1, 5)) == 7.0)
    relu = nw.NetParams([[1.0]], [0.0], [1.0], 0.0)
    assert nw.evaluate(relu, np.array([-1.0, 2.0])).tolist() == [0.0, 2.0]
    tent_net = nw.NetParams([[2.0], [2.0]], [0.0, -1.0], [1.0, -2.0], 0.0)
    assert float(nw.evaluate(tent_net, 0.75)) == pytest.approx(0.5)
    x = np.linspace(0, 1, 41)
    assert np.allclose(nw.evaluate(tent_net, x), maps.forward(TENT, x))


def test_dead_neuron_gradient():
    p = nw.NetParams([[1.0]], [-5.0], [2.0], 0.0)
    J = nw.grad_params(p, np.array([0.5]))
    assert np.array_equal(J[0], [0.0, 0.0, 0.0, 1.0])


def test_uniform_init_is_piecewise_affine():
    p = nw.init_uniform_breakpoints(4)
    p.outer_weights = np.array([1.0, -2.0, 3.0, 0.5])
    for a in (0.0, 0.25, 0.5, 0.75):
        x = a + np.linspace(0.01, 0.24, 9)
        assert np.allclose(np.diff(nw.evaluate(p, x), 2), 0.0, atol=1e-13)


def test_geometric_smallest_kink():
    k = nw.init_geometric_breakpoints(32, 0.662).kinks_1d()
    assert np.min(k[k > 0]) == pytest.approx(0.662 ** 31, rel=1e-12)


def test_fit_outer_recovers_span_at_tiny_alpha():
    target = nw.NetParams(np.ones((5, 1)), -np.arange(5) / 5, [1.0, -0.5, 2.0, 0.3, -1.0], 0.7)
    prob = transfer.DampedProblem(TENT, 1e-300, nw.as_field(target))
    rule = make_fixed_rule(TENT.domain, 8, 10)
    p = nw.fit_outer(nw.init_uniform_breakpoints(5), prob, rule)
    assert np.allclose(p.outer_weights, target.outer_weights, atol=1e-8)
    assert p.outer_bias == pytest.approx(target.outer_bias, abs=1e-8)


def test_fit_outer_matches_independent_least_squares():
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    rule = make_fixed_rule(TENT.domain, 101)
    p = nw.fit_outer(nw.init_uniform_breakpoints(8), prob, rule)
    # independent design: evaluate each basis function and its transfer image directly
    x, w = rule.nodes, rule.weights
    cols = []
    for j in range(8):
        f = transfer.Field(lambda t, j=j: np.maximum(t - j / 8, 0.0), 1)
        cols.append(f(x) - 0.5 * transfer.apply_pf(TENT, f)(x))
    cols.append(np.full_like(x, 0.5))
    A = np.sqrt(w)[:, None] * np.stack(cols, axis=1)
    sol, *_ = np.linalg.lstsq(A, np.sqrt(w) * prob.f0(x), rcond=None)
    best = np.linalg.norm(A @ sol - np.sqrt(w) * prob.f0(x))
    from pfseries.losses import make_loss
    assert make_loss(prob, "pinns", rule).value(p) == pytest.approx(best, rel=1e-6)


def test_fit_outer_idempotent():
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    rule = make_fixed_rule(TENT.domain, 41)
    once = nw.fit_outer(nw.init_uniform_breakpoints(8), prob, rule)
    twice = nw.fit_outer(once, prob, rule)
    assert np.max(np.abs(once.to_flat() - twice.to_flat())) < 1e-10


def test_fit_outer_survives_duplicate_kinks():
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    p = nw.NetParams(np.ones((4, 1)), [0.0, -0.5, -0.5, -0.5], np.zeros(4))
    q = nw.fit_outer(p, prob, make_fixed_rule(TENT.domain, 41))
    assert q.is_finite()


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(-10, 10))
def test_linear_in_outer_layer(seed, t):
    p = _random_params(4, 2, seed)
    q = nw.NetParams(p.inner_weights, p.inner_biases, t * p.outer_weights, t * p.outer_bias)
    x = np.random.default_rng(seed).random((10, 2))
    assert np.allclose(nw.evaluate(q, x), t * nw.evaluate(p, x), atol=1e-12)
