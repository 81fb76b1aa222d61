"""Numerical invariant checks shared by the ``check`` command and the test suite."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import galerkin as gk
from . import maps, network, transfer
from .losses import Loss, LossSpec, sup_form_check
from .quadrature import QuadRule, make_fixed_rule
from .transfer import DampedProblem, Field


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}) {self.detail}".rstrip()


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


# --- random smooth test fields ------------------------------------------------------


def random_smooth_field(m: maps.MapDescriptor, rng, modes: int = 2) -> Field:
    """Low-order trigonometric field, periodic in every periodic coordinate of the domain.

    Periodicity keeps composition with the wrapped maps smooth, so fixed Gauss
    rules integrate the duality and coercivity pairings to near round-off.
    """
    d = m.domain
    k = np.arange(modes + 1)
    if m.dim == 1:
        a, b = rng.standard_normal(modes + 1), rng.standard_normal(modes + 1)

        def fn(x):
            t = x[..., None]
            return np.sum(a * np.cos(np.pi * k * t) + b * np.sin(np.pi * k * t), axis=-1)

        return Field(fn, 1, name="random_smooth")
    coef = rng.standard_normal((2, modes + 1, 2, modes + 1))
    L = d.lengths
    lo = np.asarray(d.lo)

    def basis(t, j):
        # periodic coordinates use Fourier modes, the others polynomial-like cosines
        s = (t - lo[j]) / L[j]
        w = 2.0 * np.pi if d.periodic[j] else np.pi
        return np.cos(w * k * s[..., None]), np.sin(w * k * s[..., None])

    def fn(x):
        c0, s0 = basis(x[..., 0], 0)
        c1, s1 = basis(x[..., 1], 1)
        f0 = np.stack([c0, s0], axis=-2)  # (..., 2, modes+1)
        f1 = np.stack([c1, s1], axis=-2)
        return np.einsum("...ab,...cd,abcd->...", f0, f1, coef)

    return Field(fn, 2, name="random_smooth")


def pairing_rule(m: maps.MapDescriptor) -> QuadRule:
    """Rule for the duality and coercivity checks; the tent rule is split at the fold x = 1/2."""
    if m.id == "tent":
        return make_fixed_rule(m.domain, 101, 2)
    return make_fixed_rule(m.domain, 101)


# --- individual checks ----------------------------------------------------------------


def manufactured_residual_sup(case: str, alpha: float = 0.5, n_points: int = 1000, seed: int = 0) -> float:
    prob, u = transfer.make_problem(case, alpha)
    x = _rng(seed).uniform(1e-6, 1.0, n_points)
    return float(np.max(np.abs(transfer.residual(prob, u)(x))))


def duality_and_coercivity(map_id: str, n_fields: int = 100, alpha: float = 0.5, seed: int = 0):
    """(max relative duality defect, min of b(u,u) - (1-alpha)|u|^2) over random smooth fields."""
    m = maps.make_map(map_id)
    rule = pairing_rule(m)
    rng = _rng(seed)
    prob = DampedProblem(m, alpha, transfer.constant(0.0, m.dim))
    worst_dual, worst_coer = 0.0, np.inf
    w = rule.weights
    for _ in range(n_fields):
        u, v = random_smooth_field(m, rng), random_smooth_field(m, rng)
        lhs = np.sum(w * transfer.apply_pf(m, u)(rule.nodes) * v(rule.nodes))
        rhs = np.sum(w * u(rule.nodes) * transfer.apply_koopman(m, v)(rule.nodes))
        scale = np.sqrt(np.sum(w * u(rule.nodes) ** 2) * np.sum(w * v(rule.nodes) ** 2))
        worst_dual = max(worst_dual, abs(lhs - rhs) / scale)
        b = transfer.bilinear_b(prob, u, u, rule)
        worst_coer = min(worst_coer, b - (1.0 - alpha) * np.sum(w * u(rule.nodes) ** 2))
    return float(worst_dual), float(worst_coer)


def series_residual(map_id: str, n_terms: int, alpha: float = 0.5, rule: QuadRule | None = None):
    """(|(I - alpha P) u_N - f0|, alpha^(N+1) |f0|) for the map's benchmark density."""
    case = {"tent": transfer.SMOOTH_EXP, "circle_boundary": transfer.CIRCLE_F0,
            "standard_map": transfer.STANDARD_F0}[map_id]
    prob, _ = transfer.make_problem(case, alpha)
    rule = rule or make_fixed_rule(prob.map.domain, 101)
    uN = transfer.truncated_series(prob, n_terms)
    r = transfer.residual(prob, uN)(rule.nodes)
    f0n = np.sqrt(np.sum(rule.weights * prob.f0(rule.nodes) ** 2))
    return float(np.sqrt(np.sum(rule.weights * r * r))), float(alpha ** (n_terms + 1) * f0n)


def quasi_optimality(case: str, M: int, alpha: float = 0.5):
    """(Galerkin error, 2/(1-alpha) times the projection error) for the hat basis on M intervals."""
    from .bench import galerkin_l2_error

    prob, u = transfer.make_problem(case, alpha)
    basis = gk.hat_basis(prob.map.domain, M)
    load = make_fixed_rule(prob.map.domain, 501)
    c = gk.solve(gk.assemble(prob, basis, load_rule=load))
    proj = gk.l2_projection(basis, u, load_rule=load)
    e_gal = galerkin_l2_error(basis, c, u)
    e_proj = galerkin_l2_error(basis, proj, u)
    return e_gal, 2.0 / (1.0 - alpha) * e_proj


def _min_preactivation(params: network.NetParams, pts) -> float:
    pts = np.asarray(pts, dtype=float).reshape(-1, params.input_dim)
    return float(np.min(np.abs(pts @ params.inner_weights.T + params.inner_biases)))


def kink_avoiding_params(loss: Loss, n_hidden: int, rng, margin: float = 1e-4, tries: int = 1000):
    """Random parameters whose kinks stay ``margin`` away from every evaluation point of the loss."""
    m = loss.prob.map
    pts = [loss.x] + [y for y, _ in loss.branches]
    pts = np.concatenate([np.asarray(p).reshape(-1, m.dim) for p in pts])
    for _ in range(tries):
        if m.dim == 1:
            W = rng.uniform(0.5, 3.0, (n_hidden, 1)) * rng.choice([-1.0, 1.0], (n_hidden, 1))
            b = -W[:, 0] * rng.uniform(0.0, 1.0, n_hidden)
        else:
            W = rng.standard_normal((n_hidden, 2))
            anchors = np.asarray(m.domain.lo) + rng.random((n_hidden, 2)) * m.domain.lengths
            b = -np.einsum("ij,ij->i", W, anchors)
        p = network.NetParams(W, b, rng.standard_normal(n_hidden), rng.standard_normal())
        if _min_preactivation(p, pts) > margin:
            return p
    raise RuntimeError("could not draw kink-avoiding parameters")


def gradient_fd_error(loss: Loss, params: network.NetParams, h: float = 1e-6) -> float:
    """Relative max-norm gap between the analytic loss gradient and central differences."""
    _, g = loss.value_and_grad(params)
    th = params.to_flat()
    fd = np.empty_like(th)
    for i in range(th.size):
        e = np.zeros_like(th)
        e[i] = h
        fd[i] = (loss.value(params.with_flat(th + e)) - loss.value(params.with_flat(th - e))) / (2.0 * h)
    return float(np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), 1e-300))


def fd_losses(seed: int = 0):
    """Small PINNs and RVPINNs losses (1D tent, 2D circle) used by the gradient checks."""
    out = []
    for case, q in ((transfer.SMOOTH_EXP, 41), (transfer.CIRCLE_F0, 15)):
        prob, _ = transfer.make_problem(case, 0.5)
        rule = make_fixed_rule(prob.map.domain, q)
        basis = gk.indicator_basis(prob.map.domain, (8,) * prob.dim)
        out.append((f"pinns/{prob.map.id}", Loss(LossSpec("pinns", rule), prob)))
        out.append((f"rvpinns-pf/{prob.map.id}", Loss(LossSpec("rvpinns", rule, test_basis=basis), prob)))
        out.append((f"rvpinns-koopman/{prob.map.id}",
                    Loss(LossSpec("rvpinns", rule, test_basis=basis, rvpinns_path="koopman"), prob)))
    return out


def loss_form_agreement(map_id: str, n_nets: int = 20, seed: int = 0, n_hidden: int = 6):
    """Worst relative gap between the sqrt-sum (transfer form), Koopman and supremum forms.

    The tested integrals are computed exactly (piecewise-linear integration),
    so the three forms should agree to round-off.
    """
    m = maps.make_map(map_id)
    cells = (8,) * m.dim
    basis = gk.indicator_basis(m.domain, cells)
    case = transfer.SMOOTH_EXP if map_id == "tent" else transfer.CIRCLE_F0
    prob, _ = transfer.make_problem(case, 0.5)
    rule = basis.aligned_rule(4, 2)
    pf = Loss(LossSpec("rvpinns", rule, test_basis=basis, integration="exact"), prob)
    kp = Loss(LossSpec("rvpinns", rule, test_basis=basis, rvpinns_path="koopman", integration="exact"), prob)
    rng = _rng(seed)
    worst = 0.0
    probe_excess = -np.inf
    for _ in range(n_nets):
        if m.dim == 1:
            p = network.NetParams(rng.normal(0, 3, (n_hidden, 1)), rng.normal(0, 1, n_hidden),
                                  rng.standard_normal(n_hidden), rng.standard_normal())
        else:
            p = network.init_random_2d(n_hidden, m.domain, int(rng.integers(1 << 31)))
            p.outer_weights = rng.standard_normal(n_hidden)
            p.outer_bias = float(rng.standard_normal())
        a = pf.value(p)
        b = kp.value(p)
        s = sup_form_check(pf, p, probe_count=10, seed=int(rng.integers(1 << 31)))
        worst = max(worst, abs(a - b) / a, abs(s.supremizer_ratio - a) / a)
        probe_excess = max(probe_excess, s.max_probe_ratio - a)
    return float(worst), float(probe_excess)


# --- suite ----------------------------------------------------------------------------------


def run_all(seed: int = 0, progress: Callable[[str], None] | None = None) -> list[CheckResult]:
    """Fast invariant suite behind ``pfseries check``."""
    res = []

    def add(r: CheckResult):
        res.append(r)
        if progress:
            progress(r.line())

    for case in (transfer.SMOOTH_EXP, transfer.SINGULAR):
        v = manufactured_residual_sup(case, seed=seed)
        add(CheckResult(f"manufactured residual {case}", v <= 1e-10, v, 1e-10))
    for mid in maps.MAP_IDS:
        dual, coer = duality_and_coercivity(mid, n_fields=20, seed=seed)
        add(CheckResult(f"duality {mid}", dual <= 1e-8, dual, 1e-8))
        add(CheckResult(f"coercivity margin {mid}", coer >= -1e-8, coer, -1e-8))
    for mid in maps.MAP_IDS:
        r, bnd = series_residual(mid, 10)
        add(CheckResult(f"series residual bound {mid} N=10", r <= bnd + 1e-8, r, bnd + 1e-8))
    for case in (transfer.SMOOTH_EXP, transfer.SINGULAR):
        e, bnd = quasi_optimality(case, 16)
        add(CheckResult(f"quasi-optimality {case} M=16", e <= bnd, e, bnd))
    m = maps.tent()
    P = gk.ulam_matrix(m, gk.Partition(m.domain, (16,)))
    v = float(np.max(np.abs(P.sum(axis=0) - 1.0)))
    add(CheckResult("Ulam column sums (tent)", v <= 1e-12, v, 1e-12))
    rng = _rng(seed)
    for name, loss in fd_losses(seed):
        n = 6 if loss.prob.dim == 1 else 5
        err = max(gradient_fd_error(loss, kink_avoiding_params(loss, n, rng)) for _ in range(3))
        add(CheckResult(f"gradient vs finite differences {name}", err < 1e-5, err, 1e-5))
    for mid in ("tent", "circle_boundary"):
        gap, excess = loss_form_agreement(mid, n_nets=3, seed=seed)
        add(CheckResult(f"loss-form agreement {mid}", gap <= 1e-8, gap, 1e-8))
        add(CheckResult(f"supremum probes {mid}", excess <= 1e-10, excess, 1e-10))
    prob, _ = transfer.make_problem(transfer.SMOOTH_EXP, 0.5)
    basis = gk.indicator_basis(prob.map.domain, (8,))
    rule = basis.aligned_rule(13, 1)  # discrete orthonormality needs cell-aligned panels
    pl = Loss(LossSpec("pinns", rule), prob)
    rl = Loss(LossSpec("rvpinns", rule, test_basis=basis), prob)
    worst = -np.inf
    for _ in range(5):
        p = kink_avoiding_params(pl, 6, rng)
        worst = max(worst, rl.value(p) - pl.value(p))
    add(CheckResult("projection contraction (RVPINNs <= PINNs)", worst <= 1e-8, worst, 1e-8))
    return res
