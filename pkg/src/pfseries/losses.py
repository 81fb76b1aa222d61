"""PINNs and RVPINNs losses for shallow ReLU networks, with analytic gradients.

Both losses are reported unsquared. ``squared_and_grad`` gives the squared
loss, which is what the optimisers minimise (it stays smooth at a zero
residual).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import exact, maps
from .galerkin import Basis
from .network import NetParams, evaluate, vjp
from .quadrature import QuadRule
from .transfer import DampedProblem, Field, bilinear_b, linear_l

LOSS_KINDS = ("pinns", "rvpinns")
PATHS = ("pf", "koopman")
INTEGRATIONS = ("quadrature", "exact")


@dataclass(frozen=True)
class LossSpec:
    kind: str
    rule: QuadRule
    p: float = 2.0
    test_basis: Basis | None = None
    rvpinns_path: str = "pf"
    integration: str = "quadrature"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if not 1.0 < self.p < np.inf:
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if self.kind == "rvpinns":
            if self.test_basis is None:
                raise ValueError("the RVPINNs loss needs a test basis")
            if not self.test_basis.orthonormal:
                raise ValueError("the RVPINNs loss needs an orthonormal test basis")
            if self.p != 2.0:
                raise ValueError("the RVPINNs loss is only defined for p = 2")
            if self.rvpinns_path not in PATHS:
                raise ValueError(f"rvpinns_path must be one of {PATHS}")
            if self.integration not in INTEGRATIONS:
                raise ValueError(f"integration must be one of {INTEGRATIONS}")


class Loss:
    """A loss bound to a problem, with all parameter-independent data precomputed."""

    def __init__(self, spec: LossSpec, prob: DampedProblem):
        if spec.rule.dim != prob.dim:
            raise ValueError("quadrature rule and problem have different dimensions")
        self.spec = spec
        self.prob = prob
        self.alpha = prob.alpha
        rule = spec.rule
        self.x, self.w = rule.nodes, rule.weights
        self.f0 = prob.f0(self.x)
        self.branches = maps.preimage_branches(prob.map, self.x)
        if spec.kind == "rvpinns":
            basis = spec.test_basis
            self.G = basis.evaluate(self.x)
            if spec.integration == "exact":
                lr = basis.aligned_rule(8, 4)
                self.l = basis.evaluate(lr.nodes).T @ (lr.weights * prob.f0(lr.nodes))
            else:
                self.l = self.G.T @ (self.w * self.f0)
                if spec.rvpinns_path == "koopman":
                    KG = basis.evaluate(maps.forward(prob.map, self.x))
                    self.GK = self.G - self.alpha * KG

    @property
    def kind(self) -> str:
        return self.spec.kind

    def _check(self, params: NetParams):
        if params.input_dim != self.prob.dim:
            raise ValueError(f"network input_dim {params.input_dim} does not match problem dim {self.prob.dim}")

    def pointwise_residual(self, params: NetParams) -> np.ndarray:
        """f0 - u + alpha P u at the quadrature nodes."""
        r = self.f0 - evaluate(params, self.x)
        for y, jac in self.branches:
            r = r + self.alpha * jac * evaluate(params, y)
        return r

    def _pull_residual(self, params: NetParams, s: np.ndarray) -> np.ndarray:
        # sum_i s_i d(f0 - u + alpha P u)(x_i) / d theta
        g = -vjp(params, self.x, s)
        for y, jac in self.branches:
            g += self.alpha * vjp(params, y, s * jac)
        return g

    def tested_residuals(self, params: NetParams) -> np.ndarray:
        """r_m = l(g_m) - b(u, g_m) for the RVPINNs loss."""
        return self._tested(params, jac=False)[0]

    def _tested(self, params: NetParams, jac: bool):
        spec = self.spec
        if spec.integration == "exact":
            b, J = exact.tested_network_terms(params, self.prob.map, self.alpha,
                                              spec.test_basis.partition, spec.rvpinns_path)
            return self.l - b, (-J if jac else None)
        if spec.rvpinns_path == "pf":
            R = self.pointwise_residual(params)
            return self.G.T @ (self.w * R), None
        u = evaluate(params, self.x)
        return self.l - self.GK.T @ (self.w * u), None

    def value(self, params: NetParams) -> float:
        self._check(params)
        if self.kind == "pinns":
            r = self.pointwise_residual(params)
            return float(np.sum(self.w * np.abs(r) ** self.spec.p) ** (1.0 / self.spec.p))
        return float(np.linalg.norm(self.tested_residuals(params)))

    def squared_and_grad(self, params: NetParams) -> tuple[float, np.ndarray]:
        """Squared loss and its gradient in the flat parameter ordering."""
        self._check(params)
        if self.kind == "pinns":
            r = self.pointwise_residual(params)
            p = self.spec.p
            if p == 2.0:
                return float(np.sum(self.w * r * r)), self._pull_residual(params, 2.0 * self.w * r)
            S = float(np.sum(self.w * np.abs(r) ** p))
            if S == 0.0:
                return 0.0, np.zeros(params.n_params)
            L = S ** (1.0 / p)
            s = 2.0 * L ** (2.0 - p) * self.w * np.abs(r) ** (p - 1.0) * np.sign(r)
            return L * L, self._pull_residual(params, s)
        spec = self.spec
        r, J = self._tested(params, jac=True)
        sq = float(r @ r)
        if spec.integration == "exact":
            return sq, 2.0 * J.T @ r
        if spec.rvpinns_path == "pf":
            return sq, self._pull_residual(params, 2.0 * self.w * (self.G @ r))
        return sq, vjp(params, self.x, -2.0 * self.w * (self.GK @ r))

    def value_and_grad(self, params: NetParams) -> tuple[float, np.ndarray]:
        """Unsquared loss and its gradient; the gradient is zero at a zero loss."""
        sq, g = self.squared_and_grad(params)
        L = np.sqrt(sq)
        if L == 0.0:
            return 0.0, np.zeros_like(g)
        return float(L), g / (2.0 * L)


def make_loss(prob: DampedProblem, kind: str, rule: QuadRule, **kw) -> Loss:
    return Loss(LossSpec(kind, rule, **kw), prob)


class SupFormResult(NamedTuple):
    loss: float
    supremizer_ratio: float
    max_probe_ratio: float
    supremizer_norm: float


def sup_form_check(loss: Loss, params: NetParams, probe_count: int = 20, seed: int = 0,
                   norm_rule: QuadRule | None = None) -> SupFormResult:
    """Supremum form of the RVPINNs loss evaluated at the Riesz supremizer and at random probes.

    The supremizer g = sum_m r_m g_m attains the supremum of
    (l(v) - b(u, v)) / |v| over the test space. With quadrature integration the
    numerator is recomputed on the assembled field g itself; with exact
    integration it is the same linear combination of exact tested terms.
    Norms of test functions are taken with a partition-aligned rule.
    """
    if loss.kind != "rvpinns":
        raise ValueError("sup_form_check needs an RVPINNs loss")
    spec = loss.spec
    basis = spec.test_basis
    norm_rule = norm_rule or basis.aligned_rule(2, 1)
    r = loss.tested_residuals(params)
    L = float(np.linalg.norm(r))

    def field(coeffs):
        coeffs = np.array(coeffs, dtype=float)
        return Field(lambda x: basis.expand(x, coeffs), basis.dim, "galerkin", "v_M")

    def vnorm(coeffs):
        v = field(coeffs)
        return float(np.sqrt(np.sum(norm_rule.weights * v(norm_rule.nodes) ** 2)))

    def numerator(coeffs):
        if spec.integration == "exact":
            return float(coeffs @ r)
        v = field(coeffs)
        u = Field(lambda x: evaluate(params, x), basis.dim, "network")
        return linear_l(loss.prob, v, spec.rule) - bilinear_b(loss.prob, u, v, spec.rule, spec.rvpinns_path)

    gnorm = vnorm(r)
    ratio = 0.0 if gnorm == 0.0 else numerator(r) / gnorm
    rng = np.random.Generator(np.random.Philox(seed))
    best = -np.inf
    for _ in range(probe_count):
        a = rng.standard_normal(basis.size)
        best = max(best, numerator(a) / vnorm(a))
    if probe_count == 0:
        best = 0.0
    return SupFormResult(L, float(ratio), float(best), gnorm)
