"""Fixed Gauss-Legendre tensor rules and an adaptive Gauss-Kronrod reference integrator."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .maps import DomainBox


class QuadratureError(RuntimeError):
    pass


class EvaluationError(FloatingPointError):
    pass


@lru_cache(maxsize=64)
def _gauss_legendre_cached(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError("need at least one node")
    m = (n + 1) // 2
    i = np.arange(1, m + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        if n == 1:
            p0, p1 = np.ones_like(x), x
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    else:
        raise QuadratureError(f"Newton iteration for {n}-point Gauss-Legendre nodes did not converge")
    # recompute derivative at the converged nodes
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    if n == 1:
        p0, p1 = np.ones_like(x), x
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    nodes = np.concatenate([-x, x[::-1][n % 2:]])
    weights = np.concatenate([w, w[::-1][n % 2:]])
    if n % 2:
        nodes[m - 1] = 0.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (ascending) and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    return _gauss_legendre_cached(int(n))


@dataclass(frozen=True)
class QuadRule:
    nodes: np.ndarray
    weights: np.ndarray
    order_per_dim: int
    domain: DomainBox

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.domain.dim


def _composite_1d(lo: float, hi: float, n: int, cells: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = gauss_legendre(n)
    edges = np.linspace(lo, hi, cells + 1)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * t[None, :]
    ww = 0.5 * (b - a) * w[None, :]
    return x.ravel(), ww.ravel()


def make_fixed_rule(domain: DomainBox, n_per_dim: int, cells_per_dim=1) -> QuadRule:
    """Gauss-Legendre rule with ``n_per_dim`` nodes per cell and dimension.

    ``cells_per_dim > 1`` gives a composite rule whose panels follow a uniform
    partition of the box, so integrands that jump on cell edges stay exact.
    """
    if n_per_dim < 2:
        raise ValueError("n_per_dim must be at least 2")
    cells = np.broadcast_to(np.asarray(cells_per_dim, dtype=int), (domain.dim,))
    xs, ws = zip(*[_composite_1d(domain.lo[i], domain.hi[i], n_per_dim, int(cells[i]))
                   for i in range(domain.dim)])
    if domain.dim == 1:
        nodes, weights = xs[0], ws[0]
    else:
        X, Y = np.meshgrid(xs[0], xs[1], indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        weights = np.outer(ws[0], ws[1]).ravel()
    nodes = np.ascontiguousarray(nodes)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(nodes, weights, int(n_per_dim), domain)


def _checked(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.flatnonzero(bad.ravel())[0])
        node = np.asarray(nodes).reshape(len(values.ravel()), -1)[i]
        raise EvaluationError(f"integrand is not finite at node {node.tolist()}")
    return values


def integrate(rule: QuadRule, f: Callable) -> float:
    values = _checked(f(rule.nodes), rule.nodes)
    return float(np.dot(rule.weights, values))


def lp_norm(rule: QuadRule, f: Callable, p: float = 2.0) -> float:
    if p <= 1:
        raise ValueError("p must exceed 1")
    values = _checked(f(rule.nodes), rule.nodes)
    return float(np.dot(rule.weights, np.abs(values) ** p) ** (1.0 / p))


def l2_norm(rule: QuadRule, f: Callable) -> float:
    return lp_norm(rule, f, 2.0)


# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK constants).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights laid out on the 15 Kronrod nodes (zero on the Kronrod-only ones).
GAUSS7_ON_KRONROD = np.zeros(15)
GAUSS7_ON_KRONROD[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


@dataclass(frozen=True)
class AdaptiveIntegrator:
    rel_tol: float = 1e-8
    max_depth: int = 40
    abs_tol: float = 0.0
    max_panels: int = 200_000

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")


class AdaptiveResult(NamedTuple):
    value: float
    est_error: float
    tolerance_met: bool


def _panel_1d(f, a, b):
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    x = c + h * KRONROD_NODES
    fx = _checked(f(x), x)
    k = h * np.dot(KRONROD_WEIGHTS, fx)
    g = h * np.dot(GAUSS7_ON_KRONROD, fx)
    return k, abs(k - g)


def _panel_2d(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    X, Y = np.meshgrid(c[0] + h[0] * KRONROD_NODES, c[1] + h[1] * KRONROD_NODES, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    fx = _checked(f(pts), pts).reshape(15, 15)
    jac = h[0] * h[1]
    k = jac * KRONROD_WEIGHTS @ fx @ KRONROD_WEIGHTS
    g = jac * GAUSS7_ON_KRONROD @ fx @ GAUSS7_ON_KRONROD
    return k, abs(k - g)


def integrate_adaptive(ai: AdaptiveIntegrator, domain, f: Callable, breaks=None) -> AdaptiveResult:
    """Globally adaptive G7/K15 integration, splitting the worst panel first.

    ``domain`` is a DomainBox or a ``(lo, hi)`` pair of floats or sequences.
    ``breaks`` (1D only) seeds the initial panels at known kinks of ``f``.
    Panels that reach ``max_depth`` are frozen and refinement stops once the
    remaining panels meet the tolerance; if the total estimate still misses it
    the result carries ``tolerance_met=False`` instead of raising.
    """
    if isinstance(domain, DomainBox):
        lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)
    else:
        lo, hi = np.atleast_1d(np.asarray(domain[0], float)), np.atleast_1d(np.asarray(domain[1], float))
    dim = lo.shape[0]
    if dim == 1:
        panel = lambda a, b: _panel_1d(f, a[0], b[0])  # noqa: E731
    elif dim == 2:
        panel = lambda a, b: _panel_2d(f, a, b)  # noqa: E731
    else:
        raise ValueError("only 1D and 2D domains are supported")

    if breaks is not None and dim == 1:
        b = np.asarray(breaks, dtype=float).ravel()
        b = b[(b > lo[0]) & (b < hi[0])]
        edges = np.unique(np.concatenate([lo, b, hi]))
        starts = [(edges[i:i + 1], edges[i + 1:i + 2]) for i in range(len(edges) - 1)]
    else:
        starts = [(lo, hi)]
    heap = []
    total_val, total_err = 0.0, 0.0
    for counter, (a, b) in enumerate(starts):
        val, err = panel(a, b)
        heap.append((-err, counter, a, b, 0, val, err))
        total_val += val
        total_err += err
    heapq.heapify(heap)
    counter = len(starts)
    frozen_val, frozen_err = 0.0, 0.0
    frozen = []
    n_panels = len(starts)
    while heap:
        # frozen panels cannot improve, so only the refinable part is tested
        if total_err - frozen_err <= max(ai.rel_tol * abs(total_val), ai.abs_tol):
            break
        if n_panels >= ai.max_panels:
            break
        _, _, a, b, depth, v, e = heapq.heappop(heap)
        if depth >= ai.max_depth:
            frozen_val += v
            frozen_err += e
            frozen.append((v, e))
            continue
        children = []
        if dim == 1:
            mid = 0.5 * (a + b)
            children = [(a, mid), (mid, b)]
        else:
            mid = 0.5 * (a + b)
            for ix in range(2):
                for iy in range(2):
                    ca = np.array([a[0] if ix == 0 else mid[0], a[1] if iy == 0 else mid[1]])
                    cb = np.array([mid[0] if ix == 0 else b[0], mid[1] if iy == 0 else b[1]])
                    children.append((ca, cb))
        total_val -= v
        total_err -= e
        for ca, cb in children:
            cv, ce = panel(ca, cb)
            counter += 1
            heapq.heappush(heap, (-ce, counter, ca, cb, depth + 1, cv, ce))
            total_val += cv
            total_err += ce
        n_panels += len(children) - 1
    # running sums drift; recompute once at the end
    total_val = sum(v for v, _ in frozen) + sum(item[5] for item in heap)
    total_err = sum(e for _, e in frozen) + sum(item[6] for item in heap)
    met = total_err <= max(ai.rel_tol * abs(total_val), ai.abs_tol)
    return AdaptiveResult(float(total_val), float(total_err), bool(met))
