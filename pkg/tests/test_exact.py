import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfseries import exact, galerkin, geometry, maps, network as nw, transfer
from pfseries.quadrature import AdaptiveIntegrator, integrate_adaptive


def _params(n, d, seed):
    rng = np.random.default_rng(seed)
    return nw.NetParams(rng.normal(0, 2, (n, d)), rng.standard_normal(n),
                        rng.standard_normal(n), rng.standard_normal())


def test_interval_integral_against_adaptive():
    p = _params(7, 1, 0)
    val, _ = exact.integrate_region(p, (0.1, 0.8))
    ref = integrate_adaptive(AdaptiveIntegrator(rel_tol=1e-14), (0.1, 0.8),
                             lambda x: nw.evaluate(p, x), breaks=p.kinks_1d())
    assert val == pytest.approx(ref.value, rel=1e-12, abs=1e-14)


def test_affine_pullback_1d():
    p = _params(5, 1, 1)
    # int_0^1 u(1 - y/2) dy / 2 = int_{1/2}^1 u
    val, _ = exact.integrate_region(p, (0.0, 1.0), B=[[-0.5]], s=[1.0], kappa=0.5)
    direct, _ = exact.integrate_region(p, (0.5, 1.0))
    assert val == pytest.approx(direct, rel=1e-13)


def test_polygon_integral_against_tensor_gauss():
    p = _params(6, 2, 2)
    lo, hi = np.array([0.2, -0.3]), np.array([1.1, 0.9])
    val, _ = exact.integrate_region(p, geometry.box_polygon(lo, hi))
    ref = integrate_adaptive(AdaptiveIntegrator(rel_tol=1e-11), (lo, hi), lambda x: nw.evaluate(p, x))
    assert val == pytest.approx(ref.value, rel=1e-8)


@pytest.mark.parametrize("d", [1, 2])
def test_region_gradient_matches_finite_differences(d):
    p = _params(4, d, 3)
    region = (0.0, 1.0) if d == 1 else np.array([[0, 0], [1, 0], [0.5, 1.0]])
    _, g = exact.integrate_region(p, region)
    th, h = p.to_flat(), 1e-6
    for i in range(th.size):
        e = np.zeros_like(th)
        e[i] = h
        fd = (exact.integrate_region(p.with_flat(th + e), region)[0]
              - exact.integrate_region(p.with_flat(th - e), region)[0]) / (2 * h)
        assert g[i] == pytest.approx(fd, abs=1e-7)


@pytest.mark.parametrize("map_id", ["tent", "circle_boundary"])
def test_pf_and_koopman_paths_agree(map_id):
    m = maps.make_map(map_id)
    part = galerkin.Partition(m.domain, (8,) * m.dim)
    p = _params(5, m.dim, 4) if m.dim == 1 else nw.init_random_2d(5, m.domain, 4)
    p.outer_weights = np.random.default_rng(5).standard_normal(5)
    a, Ja = exact.tested_network_terms(p, m, 0.5, part, "pf")
    b, Jb = exact.tested_network_terms(p, m, 0.5, part, "koopman")
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)
    assert np.allclose(Ja, Jb, rtol=1e-9, atol=1e-11)


def test_tested_terms_constant_network():
    # u = 1 gives b(1, g_m) = (1 - alpha) sqrt(|cell|) on the tent map
    m = maps.tent()
    part = galerkin.Partition(m.domain, (4,))
    p = nw.NetParams(np.ones((1, 1)), [0.0], [0.0], 1.0)
    vals, _ = exact.tested_network_terms(p, m, 0.5, part)
    assert np.allclose(vals, 0.5 * np.sqrt(0.25))


def test_tested_terms_match_fine_quadrature_tent():
    m = maps.tent()
    basis = galerkin.indicator_basis(m.domain, (8,))
    prob = transfer.DampedProblem(m, 0.5, transfer.constant(0.0))
    p = _params(6, 1, 6)
    vals, _ = exact.tested_network_terms(p, m, 0.5, basis.partition)
    u = nw.as_field(p)
    rule = basis.aligned_rule(64, 64)
    quad = [transfer.bilinear_b(prob, u, g, rule) for g in basis.functions]
    assert np.allclose(vals, quad, atol=1e-6)


def test_standard_map_unsupported():
    m = maps.standard_map()
    with pytest.raises(maps.UnsupportedOperation):
        exact.tested_network_terms(nw.init_random_2d(3, m.domain), m, 0.5,
                                   galerkin.Partition(m.domain, (2, 2)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), a=st.floats(0, 0.9), w=st.floats(0.05, 1.0))
def test_interval_additivity(seed, a, w):
    p = _params(5, 1, seed)
    b = a + w
    mid = a + 0.37 * w
    whole, gw = exact.integrate_region(p, (a, b))
    left, gl = exact.integrate_region(p, (a, mid))
    right, gr = exact.integrate_region(p, (mid, b))
    assert whole == pytest.approx(left + right, rel=1e-10, abs=1e-12)
    assert np.allclose(gw, gl + gr, rtol=1e-10, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_clip_halfplane_splits_area(seed):
    rng = np.random.default_rng(seed)
    poly = geometry.box_polygon(rng.random(2), 1 + rng.random(2))
    a, c = rng.standard_normal(2), float(rng.standard_normal())
    pos, _ = geometry.area_centroid(geometry.clip_halfplane(poly, a, c))
    neg, _ = geometry.area_centroid(geometry.clip_halfplane(poly, -a, -c))
    total, _ = geometry.area_centroid(poly)
    assert pos + neg == pytest.approx(total, rel=1e-12)
