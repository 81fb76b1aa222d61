"""Error metrics, reference solutions and the experiment drivers behind the CLI."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import galerkin as gk
from . import maps, network, transfer
from .config import ExperimentConfig, to_dict
from .losses import Loss, LossSpec
from .optim import TRACE_COLUMNS, AdamConfig, OptConfig
from .quadrature import AdaptiveIntegrator, QuadRule, integrate_adaptive, make_fixed_rule
from .training import continuation, minimize
from .transfer import DampedProblem, Field

SWEEP_COLUMNS = ("n", "l2_error", "final_loss", "iters", "wall_ms")
QUAD_STUDY_COLUMNS = ("q_points", "loss_value", "abs_discrepancy")


# --- metrics ------------------------------------------------------------------


def l2_error(approx: Field, reference: Field, rule, domain=None, breaks=None) -> float:
    """L2 distance between two fields, by a fixed rule or an adaptive integrator.

    With an ``AdaptiveIntegrator`` the domain must be given; ``breaks`` (1D)
    seeds the panels with known kinks of either field.
    """
    def sq(x):
        return (approx(x) - reference(x)) ** 2

    if isinstance(rule, QuadRule):
        vals = sq(rule.nodes)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite field values at quadrature nodes")
        return float(np.sqrt(np.sum(rule.weights * vals)))
    if domain is None:
        raise ValueError("adaptive error measurement needs the domain")
    res = integrate_adaptive(rule, domain, sq, breaks=breaks)
    return float(np.sqrt(max(res.value, 0.0)))


def eoc(errors, ns) -> list:
    """Experimental orders log(e_i / e_i+1) / log(n_i+1 / n_i); ``None`` where undefined."""
    errors = [float(e) for e in errors]
    ns = [float(n) for n in ns]
    if len(errors) != len(ns) or len(errors) < 2:
        raise ValueError("need at least two (error, n) pairs of equal length")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("ns must be increasing")
    out = []
    for i in range(len(errors) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if e0 > 0.0 and e1 > 0.0 and math.isfinite(e0) and math.isfinite(e1):
            out.append(math.log(e0 / e1) / math.log(ns[i + 1] / ns[i]))
        else:
            out.append(None)
    return out


def loglog_slope(ns, errors) -> float:
    """Least-squares slope of log(error) against log(n)."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(errors, float)), 1)[0])


def series_terms_for(alpha: float, f0_norm: float, tol: float = 1e-6) -> int:
    """Smallest N with alpha^(N+1) |f0| / (1 - alpha) < tol."""
    if f0_norm <= 0.0:
        return 0
    N = math.ceil(math.log(tol * (1.0 - alpha) / f0_norm) / math.log(alpha)) - 1
    N = max(N, 0)
    while alpha ** (N + 1) * f0_norm / (1.0 - alpha) >= tol:
        N += 1
    return N


def default_rule(m: maps.MapDescriptor, points_per_dim: int = 101, cells_per_dim: int = 1) -> QuadRule:
    return make_fixed_rule(m.domain, points_per_dim, cells_per_dim)


def reference_solution(prob: DampedProblem, exact: Field | None = None, n_terms: int | None = None,
                       tol: float = 1e-6, norm_rule: QuadRule | None = None):
    """Reference field and its certified L2 tail bound.

    Manufactured cases return the exact solution (bound 0). Otherwise the
    truncated series is used, with N the smallest count whose tail bound
    alpha^(N+1) |f0| / (1 - alpha) is below ``tol`` unless ``n_terms`` is given.
    """
    if exact is not None:
        return exact, 0, 0.0
    rule = norm_rule or make_fixed_rule(prob.map.domain, 8, 16)
    f0n = float(np.sqrt(np.sum(rule.weights * prob.f0(rule.nodes) ** 2)))
    N = series_terms_for(prob.alpha, f0n, tol) if n_terms is None else int(n_terms)
    bound = prob.alpha ** (N + 1) * f0n / (1.0 - prob.alpha)
    return transfer.truncated_series(prob, N), N, bound


def error_rule_2d(m: maps.MapDescriptor) -> QuadRule:
    """Composite rule used to measure 2D errors against the series reference."""
    return make_fixed_rule(m.domain, 8, 16)


def network_l2_error(params: network.NetParams, reference: Field, m: maps.MapDescriptor,
                     rel_tol: float = 1e-10) -> float:
    """L2 error of a network: adaptive in 1D with the kinks as breaks, composite Gauss in 2D."""
    u = network.as_field(params)
    if m.dim == 1:
        k = params.kinks_1d()
        lo, hi = m.domain.lo[0], m.domain.hi[0]
        k = np.sort(k[np.isfinite(k) & (k > lo) & (k < hi)])
        return l2_error(u, reference, AdaptiveIntegrator(rel_tol=rel_tol, max_depth=100), m.domain, k)
    return l2_error(u, reference, error_rule_2d(m))


def reference_norm(reference: Field, m: maps.MapDescriptor, rel_tol: float = 1e-10) -> float:
    zero = transfer.constant(0.0, m.dim)
    if m.dim == 1:
        return l2_error(zero, reference, AdaptiveIntegrator(rel_tol=rel_tol, max_depth=100), m.domain)
    return l2_error(zero, reference, error_rule_2d(m))


def galerkin_l2_error(basis: gk.Basis, coeffs, reference: Field, rel_tol: float = 1e-10) -> float:
    u = gk.galerkin_field(basis, coeffs)
    d = basis.partition.domain
    if d.dim == 1:
        lo, hi = basis.partition.all_bounds()
        return l2_error(u, reference, AdaptiveIntegrator(rel_tol=rel_tol, max_depth=100), d, lo[1:, 0])
    return l2_error(u, reference, make_fixed_rule(d, 4, np.asarray(basis.partition.cells_per_dim) * 2))


# --- reports --------------------------------------------------------------------


@dataclass
class RunReport:
    command: str
    config: dict
    final_loss: float | None = None
    l2_error: float | None = None
    trace_path: str | None = None
    wall_ms: float = 0.0
    sweep: list = field(default_factory=list)
    eoc: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))


def write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_report(report: RunReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{report.command}_report.json"
    path.write_text(report.to_json())
    return path


# --- building blocks from a config ----------------------------------------------


def build_problem(cfg: ExperimentConfig):
    pc = cfg.problem
    return transfer.make_problem(pc.case, pc.alpha, pc.k_param, pc.p)


def build_rule(cfg: ExperimentConfig, m: maps.MapDescriptor, kind: str | None = None) -> QuadRule:
    """The configured rule; RVPINNs spread the same points over panels aligned with the test cells."""
    q = cfg.quadrature
    if kind == "rvpinns" and q.cells_per_dim == 1:
        cells = cfg.loss.test_cells
        return make_fixed_rule(m.domain, math.ceil(q.points_per_dim / cells), cells)
    return make_fixed_rule(m.domain, q.points_per_dim, q.cells_per_dim)


def opt_config(cfg: ExperimentConfig) -> OptConfig:
    t = cfg.train
    return OptConfig(t.optimizer, t.max_iters, t.grad_tol, t.loss_tol,
                     adam=AdamConfig(t.adam.step, t.adam.beta1, t.adam.beta2, t.adam.eps))


def rv_basis(m: maps.MapDescriptor, cells: int) -> gk.Basis:
    return gk.indicator_basis(m.domain, (cells,) * m.dim)


def make_loss(cfg: ExperimentConfig, prob: DampedProblem, rule: QuadRule, kind: str) -> Loss:
    if kind == "pinns":
        return Loss(LossSpec("pinns", rule, p=prob.p_exponent), prob)
    lc = cfg.loss
    return Loss(LossSpec("rvpinns", rule, test_basis=rv_basis(prob.map, lc.test_cells),
                         rvpinns_path=lc.path, integration=lc.integration), prob)


def init_params(cfg: ExperimentConfig, m: maps.MapDescriptor, n_hidden: int | None = None) -> network.NetParams:
    nc = cfg.net
    n = n_hidden or nc.n_hidden
    if nc.init == "uniform":
        if m.dim != 1:
            raise ValueError("uniform breakpoints are a 1D initialisation")
        return network.init_uniform_breakpoints(n, (m.domain.lo[0], m.domain.hi[0]))
    if nc.init == "geometric":
        if m.dim != 1:
            raise ValueError("geometric breakpoints are a 1D initialisation")
        return network.init_geometric_breakpoints(n, nc.r)
    if m.dim != 2:
        raise ValueError("random2d initialisation needs a 2D map")
    return network.init_random_2d(n, m.domain, nc.seed)


def _fit(params, loss: Loss):
    spec = loss.spec
    if spec.kind == "pinns" and spec.p != 2.0:
        return params  # the outer fit is a least-squares problem only for p = 2
    basis = spec.test_basis if spec.kind == "rvpinns" else None
    path = spec.rvpinns_path if basis is not None else "pf"
    return network.fit_outer(params, loss.prob, spec.rule, basis, path)


def stage_iters(cfg: ExperimentConfig) -> list:
    t = cfg.train
    return list(t.continuation_iters) or [t.max_iters] * len(t.continuation_alphas)


def train_network(cfg: ExperimentConfig, prob: DampedProblem, rule: QuadRule, kind: str,
                  n_hidden: int | None = None):
    """Initialise, optionally fit the outer layer, and train (with continuation if configured)."""
    m = prob.map
    params = init_params(cfg, m, n_hidden)
    opt = opt_config(cfg)
    alphas = list(cfg.train.continuation_alphas)

    def loss_at(a):
        p = dataclasses.replace(prob, alpha=a)
        return make_loss(cfg, p, rule, kind)

    if alphas:
        if alphas[-1] != prob.alpha:
            raise ValueError("the last continuation alpha must equal problem.alpha")
        first = loss_at(alphas[0])
        if cfg.net.fit_outer:
            params = _fit(params, first)
        rep = continuation(alphas, loss_at, params, opt, stage_iters(cfg))
        if not rep.completed:
            raise FloatingPointError(rep.message)
        trace = [row for st in rep.stages for row in st.trace]
        return rep.params, rep.stages[-1], trace
    loss = make_loss(cfg, prob, rule, kind)
    if cfg.net.fit_outer:
        params = _fit(params, loss)
    params, rep = minimize(loss, params, opt)
    return params, rep, rep.trace


# --- drivers ----------------------------------------------------------------------


def run_series(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    prob, exact = build_problem(cfg)
    rule = build_rule(cfg, prob.map)
    N = cfg.series.n_terms
    uN = transfer.truncated_series(prob, N)
    res = transfer.residual(prob, uN)
    r_norm = float(np.sqrt(np.sum(rule.weights * res(rule.nodes) ** 2)))
    f0n = float(np.sqrt(np.sum(rule.weights * prob.f0(rule.nodes) ** 2)))
    bound = prob.alpha ** (N + 1) * f0n
    extra = {"n_terms": N, "residual_norm": r_norm, "residual_bound": bound,
             "bound_ok": bool(r_norm <= bound + 1e-8)}
    if prob.dim == 1:
        g = np.linspace(0.0, 1.0, cfg.series.grid_points)[1:-1]
        vals = uN(g)
        extra.update(min_value=float(vals.min()), max_value=float(vals.max()))
    err = None
    if exact is not None:
        err = l2_error(uN, exact, rule)
        if cfg.problem.case == transfer.UNIT:
            g = np.linspace(0.0, 1.0, cfg.series.grid_points)
            extra["sup_deviation"] = float(np.max(np.abs(uN(g) - exact(g))))
    return RunReport("series", to_dict(cfg), None, err, None, 1e3 * (time.perf_counter() - t0), extra=extra)


def run_galerkin(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    prob, exact = build_problem(cfg)
    m = prob.map
    gc = cfg.galerkin
    if gc.basis == "hat":
        basis = gk.hat_basis(m.domain, gc.n)
    else:
        basis = gk.indicator_basis(m.domain, (gc.n,) * m.dim)
    load = make_fixed_rule(m.domain, gc.load_points) if gc.load_points else None
    sysm = gk.assemble(prob, basis, load_rule=load)
    c = gk.solve(sysm)
    ref, N, bound = reference_solution(prob, exact)
    err = galerkin_l2_error(basis, c, ref)
    extra = {"basis": gc.basis, "size": basis.size, "reference_terms": N, "reference_tail_bound": bound}
    return RunReport("galerkin", to_dict(cfg), None, err, None, 1e3 * (time.perf_counter() - t0), extra=extra)


def run_network(cfg: ExperimentConfig, kind: str) -> RunReport:
    t0 = time.perf_counter()
    prob, exact = build_problem(cfg)
    rule = build_rule(cfg, prob.map, kind)
    params, rep, trace = train_network(cfg, prob, rule, kind)
    ref, N, bound = reference_solution(prob, exact)
    err = network_l2_error(params, ref, prob.map)
    ref_norm = reference_norm(ref, prob.map)
    out = Path(cfg.out_dir)
    trace_path = out / f"{kind}_trace.csv"
    write_csv(trace_path, TRACE_COLUMNS, trace)
    (out / f"{kind}_params.json").write_text(params.to_json())
    # a-posteriori consequence of coercivity: (1 - alpha) |u - u_theta| <= PINNs loss
    pinns_value = make_loss(cfg, prob, rule, "pinns").value(params)
    extra = {"status": rep.status, "iters": rep.n_iters, "initial_loss": rep.initial_loss,
             "relative_l2_error": err / ref_norm if ref_norm > 0 else None,
             "reference_terms": N, "reference_tail_bound": bound,
             "pinns_loss": pinns_value, "aposteriori_lhs": (1.0 - prob.alpha) * err,
             "line_search_fallbacks": rep.n_fallbacks, "bfgs_resets": rep.n_resets}
    return RunReport(kind, to_dict(cfg), rep.final_loss, err, str(trace_path),
                     1e3 * (time.perf_counter() - t0), extra=extra)


def run_eoc_sweep(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    prob, exact = build_problem(cfg)
    ref, _, _ = reference_solution(prob, exact)
    rows = []
    for n in cfg.sweep.ns:
        t1 = time.perf_counter()
        if cfg.method == "galerkin":
            m = prob.map
            basis = gk.hat_basis(m.domain, n) if cfg.galerkin.basis == "hat" \
                else gk.indicator_basis(m.domain, (n,) * m.dim)
            load = make_fixed_rule(m.domain, cfg.galerkin.load_points) if cfg.galerkin.load_points else None
            c = gk.solve(gk.assemble(prob, basis, load_rule=load))
            rows.append((n, galerkin_l2_error(basis, c, ref), float("nan"), 0, 1e3 * (time.perf_counter() - t1)))
        elif cfg.method in ("pinns", "rvpinns"):
            rule = build_rule(cfg, prob.map, cfg.method)
            params, rep, _ = train_network(cfg, prob, rule, cfg.method, n_hidden=n)
            rows.append((n, network_l2_error(params, ref, prob.map), rep.final_loss, rep.n_iters,
                         1e3 * (time.perf_counter() - t1)))
        else:
            raise ValueError(f"eoc-sweep does not support method {cfg.method!r}")
    ns = [r[0] for r in rows]
    errs = [r[1] for r in rows]
    out = Path(cfg.out_dir)
    path = out / f"eoc_{cfg.method}.csv"
    write_csv(path, SWEEP_COLUMNS, rows)
    sweep = [dict(zip(SWEEP_COLUMNS, (r[0], r[1], None if math.isnan(r[2]) else r[2], r[3], r[4]))) for r in rows]
    return RunReport("eoc-sweep", to_dict(cfg), None, errs[-1], str(path), 1e3 * (time.perf_counter() - t0),
                     sweep=sweep, eoc=eoc(errs, ns), extra={"loglog_slope": loglog_slope(ns, errs)})


def continuation_vs_cold(cfg: ExperimentConfig):
    """Paired run: configured continuation against a cold start at the final alpha, same total budget."""
    alphas = list(cfg.train.continuation_alphas)
    if not alphas:
        raise ValueError("train.continuation_alphas is empty")
    prob, _ = build_problem(cfg)
    rule = build_rule(cfg, prob.map, cfg.method)
    _, cont, _ = train_network(cfg, prob, rule, cfg.method)
    budget = sum(stage_iters(cfg))
    cold_cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, max_iters=budget,
                                                                  continuation_alphas=[], continuation_iters=[]))
    _, cold, _ = train_network(cold_cfg, prob, rule, cfg.method)
    return cont, cold, budget


def quasi_minimizer_gap_proxy(final_losses) -> list:
    """Proxy for the quasi-minimizer gap: each final loss minus the best one across seeds.

    The true gap needs the global minimum of the loss, which is not computable;
    this only measures spread relative to the best run seen.
    """
    v = np.asarray(final_losses, dtype=float)
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("need a non-empty list of finite losses")
    return (v - v.min()).tolist()


def quadrature_study(prob: DampedProblem, params: network.NetParams, qs, rel_tol: float = 1e-12):
    """PINNs loss by q-point Gauss rules against an adaptive reference value."""
    def sq(x):
        return transfer.residual(prob, network.as_field(params))(x) ** 2

    k = params.kinks_1d()
    k = np.sort(np.concatenate([k, 0.5 * k, 1.0 - 0.5 * k]))
    k = k[np.isfinite(k) & (k > 0.0) & (k < 1.0)]
    ref = float(np.sqrt(integrate_adaptive(AdaptiveIntegrator(rel_tol=rel_tol), prob.map.domain, sq,
                                           breaks=k).value))
    rows = []
    for q in qs:
        rule = make_fixed_rule(prob.map.domain, int(q))
        val = Loss(LossSpec("pinns", rule), prob).value(params)
        rows.append((int(q), val, abs(val - ref)))
    return ref, rows


def run_quad_study(cfg: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    prob, _ = build_problem(cfg)
    if prob.dim != 1:
        raise ValueError("the quadrature study is defined for the 1D cases")
    qc = cfg.quad_study
    base_rule = build_rule(cfg, prob.map)
    params = network.fit_outer(init_params(cfg, prob.map, qc.n_hidden), prob, base_rule)
    ref, rows = quadrature_study(prob, params, qc.qs, qc.rel_tol)
    path = Path(cfg.out_dir) / "quad_study.csv"
    write_csv(path, QUAD_STUDY_COLUMNS, rows)
    d = [r[2] for r in rows]
    extra = {"reference_loss": ref, "monotone": bool(all(b <= a for a, b in zip(d, d[1:])))}
    return RunReport("quad-study", to_dict(cfg), ref, None, str(path), 1e3 * (time.perf_counter() - t0),
                     sweep=[dict(zip(QUAD_STUDY_COLUMNS, r)) for r in rows], extra=extra)


def run(cfg: ExperimentConfig, command: str) -> RunReport:
    if command == "series":
        return run_series(cfg)
    if command == "galerkin":
        return run_galerkin(cfg)
    if command in ("pinns", "rvpinns"):
        return run_network(cfg, command)
    if command == "eoc-sweep":
        return run_eoc_sweep(cfg)
    if command == "quad-study":
        return run_quad_study(cfg)
    raise ValueError(f"unknown command {command!r}")
