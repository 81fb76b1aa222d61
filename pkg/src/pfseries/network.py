"""Shallow ReLU networks u(x) = sum_j c_j ReLU(w_j . x + b_j) + c_0.

Evaluation, analytic parameter derivatives, the breakpoint initialisations
and the linear least-squares fit of the outer layer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import maps
from .maps import DomainBox
from .quadrature import QuadRule
from .transfer import DampedProblem, Field


@dataclass
class NetParams:
    inner_weights: np.ndarray  # (n_hidden, input_dim)
    inner_biases: np.ndarray  # (n_hidden,)
    outer_weights: np.ndarray  # (n_hidden,)
    outer_bias: float = 0.0

    def __post_init__(self):
        self.inner_weights = np.atleast_2d(np.asarray(self.inner_weights, dtype=float))
        self.inner_biases = np.asarray(self.inner_biases, dtype=float).ravel()
        self.outer_weights = np.asarray(self.outer_weights, dtype=float).ravel()
        self.outer_bias = float(self.outer_bias)
        n = self.inner_weights.shape[0]
        if self.inner_biases.shape != (n,) or self.outer_weights.shape != (n,):
            raise ValueError("inconsistent hidden-layer sizes")
        if self.input_dim not in (1, 2):
            raise ValueError("input_dim must be 1 or 2")

    @property
    def n_hidden(self) -> int:
        return self.inner_weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inner_weights.shape[1]

    @property
    def n_params(self) -> int:
        return self.n_hidden * (self.input_dim + 2) + 1

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_flat())))

    def kinks_1d(self) -> np.ndarray:
        w = self.inner_weights[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(w != 0.0, -self.inner_biases / w, np.nan)

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.inner_weights.ravel(), self.inner_biases,
                               self.outer_weights, [self.outer_bias]])

    @classmethod
    def from_flat(cls, flat, n_hidden: int, input_dim: int) -> "NetParams":
        flat = np.asarray(flat, dtype=float)
        n, d = n_hidden, input_dim
        if flat.shape != (n * (d + 2) + 1,):
            raise ValueError(f"flat vector has length {flat.size}, expected {n * (d + 2) + 1}")
        W = flat[: n * d].reshape(n, d)
        b = flat[n * d: n * d + n]
        c = flat[n * d + n: n * d + 2 * n]
        return cls(W.copy(), b.copy(), c.copy(), float(flat[-1]))

    def with_flat(self, flat) -> "NetParams":
        return NetParams.from_flat(flat, self.n_hidden, self.input_dim)

    def copy(self) -> "NetParams":
        return self.with_flat(self.to_flat())

    def to_json(self) -> str:
        return json.dumps({"n_hidden": self.n_hidden, "input_dim": self.input_dim,
                           "flat": self.to_flat().tolist()})

    @classmethod
    def from_json(cls, text: str) -> "NetParams":
        d = json.loads(text)
        return cls.from_flat(d["flat"], d["n_hidden"], d["input_dim"])


def _points(params: NetParams, x) -> tuple[np.ndarray, tuple]:
    x = np.asarray(x, dtype=float)
    if params.input_dim == 1:
        return x.reshape(-1, 1), x.shape
    if x.shape[-1] != 2:
        raise ValueError(f"expected points with trailing axis 2, got {x.shape}")
    return x.reshape(-1, 2), x.shape[:-1]


def preactivations(params: NetParams, pts: np.ndarray) -> np.ndarray:
    return pts @ params.inner_weights.T + params.inner_biases


def evaluate(params: NetParams, x) -> np.ndarray:
    pts, shape = _points(params, x)
    h = np.maximum(preactivations(params, pts), 0.0)
    return (h @ params.outer_weights + params.outer_bias).reshape(shape)


def as_field(params: NetParams) -> Field:
    frozen = params.copy()
    return Field(lambda x: evaluate(frozen, x), frozen.input_dim, "network", f"net[{frozen.n_hidden}]")


def grad_params(params: NetParams, x) -> np.ndarray:
    """Full Jacobian d u(x_i) / d theta, shape ``(N, n_params)``, flat ordering."""
    pts, _ = _points(params, x)
    a = preactivations(params, pts)
    active = (a > 0.0).astype(float)
    c = params.outer_weights
    N, n, d = pts.shape[0], params.n_hidden, params.input_dim
    dW = (active * c)[:, :, None] * pts[:, None, :]
    db = active * c
    dc = np.maximum(a, 0.0)
    return np.concatenate([dW.reshape(N, n * d), db, dc, np.ones((N, 1))], axis=1)


def vjp(params: NetParams, x, s) -> np.ndarray:
    """sum_i s_i * d u(x_i) / d theta without forming the Jacobian."""
    pts, _ = _points(params, x)
    s = np.asarray(s, dtype=float).ravel()
    a = preactivations(params, pts)
    act_s = (a > 0.0) * s[:, None]
    c = params.outer_weights
    g_b = c * act_s.sum(axis=0)
    g_W = c[:, None] * (act_s.T @ pts)
    g_c = np.maximum(a, 0.0).T @ s
    return np.concatenate([g_W.ravel(), g_b, g_c, [s.sum()]])


def features(params: NetParams, x) -> np.ndarray:
    """Columns ReLU(w_j . x + b_j) and a final column of ones (outer-layer design matrix)."""
    pts, _ = _points(params, x)
    h = np.maximum(preactivations(params, pts), 0.0)
    return np.concatenate([h, np.ones((pts.shape[0], 1))], axis=1)


# --- initialisations ---------------------------------------------------------


def _kinked_1d(kinks) -> NetParams:
    kinks = np.asarray(kinks, dtype=float)
    n = kinks.size
    return NetParams(np.ones((n, 1)), -kinks, np.zeros(n), 0.0)


def init_uniform_breakpoints(n: int, domain: tuple[float, float] = (0.0, 1.0)) -> NetParams:
    """Kinks at lo + (j - 1) (hi - lo) / n, j = 1..n; outer layer zero until fitted."""
    if n < 1:
        raise ValueError("need at least one neuron")
    lo, hi = domain
    return _kinked_1d(lo + (hi - lo) * np.arange(n) / n)


def init_geometric_breakpoints(n: int, r: float = 0.662) -> NetParams:
    """Kinks at 0 and r, r^2, ..., r^(n-1): graded towards x = 0."""
    if n < 1:
        raise ValueError("need at least one neuron")
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    kinks = np.concatenate([[0.0], r ** np.arange(n - 1, 0, -1)])
    return _kinked_1d(kinks)


def init_random_2d(n: int, domain: DomainBox, seed: int = 0) -> NetParams:
    """Random directions scaled by n / diam, kink lines through uniform points of the box."""
    if n < 1:
        raise ValueError("need at least one neuron")
    rng = np.random.Generator(np.random.Philox(seed))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    W = np.stack([np.cos(ang), np.sin(ang)], axis=1) * (n / domain.diameter)
    anchors = np.asarray(domain.lo) + rng.random((n, 2)) * domain.lengths
    b = -np.einsum("ij,ij->i", W, anchors)
    return NetParams(W, b, np.zeros(n), 0.0)


# --- outer-layer least squares ----------------------------------------------


def operator_features(params: NetParams, prob: DampedProblem, x) -> np.ndarray:
    """Design matrix of (I - alpha P) applied to each outer-layer feature."""
    Phi = features(params, x)
    PPhi = 0.0
    for y, jac in maps.preimage_branches(prob.map, x):
        PPhi = PPhi + np.asarray(jac).reshape(-1, 1) * features(params, y)
    return Phi - prob.alpha * PPhi


def outer_design(params: NetParams, prob: DampedProblem, rule: QuadRule, basis=None,
                 path: str = "pf") -> tuple[np.ndarray, np.ndarray]:
    """``(T, t)`` with the loss residual equal to ``t - T @ (c, c0)`` for fixed inner parameters.

    Without a basis the rows are sqrt(w_i)-weighted pointwise residuals (PINNs);
    with an orthonormal basis they are the tested residuals (RVPINNs).
    """
    x, w = rule.nodes, rule.weights
    f0 = prob.f0(x)
    if basis is None:
        sw = np.sqrt(w)
        return sw[:, None] * operator_features(params, prob, x), sw * f0
    G = basis.evaluate(x)
    t = G.T @ (w * f0)
    if path == "pf":
        T = G.T @ (w[:, None] * operator_features(params, prob, x))
    elif path == "koopman":
        KG = basis.evaluate(maps.forward(prob.map, x))
        T = (G - prob.alpha * KG).T @ (w[:, None] * features(params, x))
    else:
        raise ValueError(f"path must be 'pf' or 'koopman', got {path!r}")
    return T, t


def fit_outer(params: NetParams, prob: DampedProblem, rule: QuadRule, basis=None,
              path: str = "pf", ridge: float = 1e-10) -> NetParams:
    """Optimal outer weights and bias for the current inner layer.

    The residual is affine in the outer layer, so this is a linear least-squares
    problem, solved through ridge-regularised normal equations.
    """
    T, t = outer_design(params, prob, rule, basis, path)
    H = T.T @ T
    lam = ridge * np.trace(H) / H.shape[0]
    sol = np.linalg.solve(H + lam * np.eye(H.shape[0]), T.T @ t)
    out = params.copy()
    out.outer_weights = sol[:-1].copy()
    out.outer_bias = float(sol[-1])
    return out
