"""Adam and dense BFGS with a strong-Wolfe line search, on flat parameter vectors."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TRACE_COLUMNS = ("iter", "loss", "grad_norm", "wall_ms")


@dataclass(frozen=True)
class AdamConfig:
    step: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class BfgsConfig:
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_trials: int = 50
    max_step: float = 1e10


@dataclass(frozen=True)
class OptConfig:
    optimizer: str = "bfgs"
    max_iters: int = 2000
    grad_tol: float = 1e-9
    loss_tol: float = 1e-12
    stall_window: int = 10
    adam: AdamConfig = field(default_factory=AdamConfig)
    bfgs: BfgsConfig = field(default_factory=BfgsConfig)

    def __post_init__(self):
        if self.optimizer not in ("adam", "bfgs"):
            raise ValueError(f"optimizer must be 'adam' or 'bfgs', got {self.optimizer!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not 0.0 < self.bfgs.c1 < self.bfgs.c2 < 1.0:
            raise ValueError("Wolfe constants need 0 < c1 < c2 < 1")


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    status: str
    n_iters: int
    trace: list = field(default_factory=list)
    n_resets: int = 0
    n_fallbacks: int = 0
    n_evals: int = 0
    wall_ms: float = 0.0
    message: str = ""
    kink_steps: int = 0


class OptimizationAborted(FloatingPointError):
    def __init__(self, message: str, result: OptResult):
        super().__init__(message)
        self.result = result


class _Recorder:
    """Loss trace and stopping tests shared by both optimisers."""

    def __init__(self, cfg: OptConfig, report: Callable[[float], float]):
        self.cfg = cfg
        self.report = report
        self.trace = []
        self.t0 = time.perf_counter()

    def ms(self) -> float:
        return 1e3 * (time.perf_counter() - self.t0)

    def log(self, it, f, g):
        self.trace.append((it, self.report(f), float(np.max(np.abs(g))) if g.size else 0.0, self.ms()))

    def stop_reason(self, it, g):
        cfg = self.cfg
        if g.size == 0 or np.max(np.abs(g)) < cfg.grad_tol:
            return "grad_tol"
        w = cfg.stall_window
        if len(self.trace) > w and abs(self.trace[-1][1] - self.trace[-1 - w][1]) < cfg.loss_tol:
            return "loss_tol"
        if it >= cfg.max_iters:
            return "max_iters"
        return None


class _NonFinite(Exception):
    pass


def _finite(f, g) -> bool:
    return bool(np.isfinite(f) and np.all(np.isfinite(g)))


def minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, cfg: OptConfig | None = None,
             report: Callable[[float], float] = float) -> OptResult:
    """Minimise ``fun`` (value and gradient) from ``x0``.

    ``report`` maps the objective to the number written in the trace, e.g. the
    square root when minimising a squared loss.
    """
    cfg = cfg or OptConfig()
    x0 = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial parameters are not finite")
    if cfg.optimizer == "adam":
        return _adam(fun, x0, cfg, report)
    return _bfgs(fun, x0, cfg, report)


def _abort(rec, x, f, it, nev, msg, **kw):
    res = OptResult(x, f, "aborted", it, rec.trace, n_evals=nev, wall_ms=rec.ms(), message=msg, **kw)
    raise OptimizationAborted(msg, res)


def _adam(fun, x, cfg, report) -> OptResult:
    a = cfg.adam
    rec = _Recorder(cfg, report)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    f, g = fun(x)
    nev = 1
    if not _finite(f, g):
        _abort(rec, x, f, 0, nev, "non-finite loss or gradient at the initial point")
    rec.log(0, f, g)
    it = 0
    while True:
        status = rec.stop_reason(it, g)
        if status:
            break
        it += 1
        m = a.beta1 * m + (1.0 - a.beta1) * g
        v = a.beta2 * v + (1.0 - a.beta2) * g * g
        mh = m / (1.0 - a.beta1 ** it)
        vh = v / (1.0 - a.beta2 ** it)
        x_new = x - a.step * mh / (np.sqrt(vh) + a.eps)
        f_new, g_new = fun(x_new)
        nev += 1
        if not _finite(f_new, g_new):
            _abort(rec, x, f, it, nev, f"non-finite loss or gradient at iteration {it}")
        x, f, g = x_new, f_new, g_new
        rec.log(it, f, g)
    return OptResult(x, float(f), status, it, rec.trace, n_evals=nev, wall_ms=rec.ms())


def _zoom(phi, lo, hi, f0, d0, bc: BfgsConfig, evals):
    # lo/hi are (step, value, slope); lo satisfies sufficient decrease
    while evals[0] < bc.max_ls_trials:
        (al, fl, dl), (ah, fh, dh) = lo, hi
        if abs(ah - al) < 1e-10 * max(1.0, abs(al)):
            # the bracket has shrunk onto a kink of the objective: accept the
            # sufficient-decrease end point without the curvature condition
            if al <= 0.0:
                return None
            fl_, _, xl, gl = phi(al)
            return (al, fl_, xl, gl, True)
        # cubic interpolation, safeguarded to the inner 80% of the bracket
        a = 0.5 * (al + ah)
        if np.isfinite(fh) and np.isfinite(dh):
            d1 = dl + dh - 3.0 * (fl - fh) / (al - ah)
            rad = d1 * d1 - dl * dh
            if rad >= 0.0:
                d2 = np.sign(ah - al) * np.sqrt(rad)
                den = dh - dl + 2.0 * d2
                if den != 0.0:
                    a = ah - (ah - al) * (dh + d2 - d1) / den
        lo_b, hi_b = min(al, ah), max(al, ah)
        margin = 0.1 * (hi_b - lo_b)
        if not np.isfinite(a) or a < lo_b + margin or a > hi_b - margin:
            a = 0.5 * (al + ah)
        fa, da, xa, ga = phi(a)
        if not np.isfinite(fa) or fa > f0 + bc.c1 * a * d0 or fa >= fl:
            hi = (a, fa, da)
        else:
            if abs(da) <= -bc.c2 * d0:
                return (a, fa, xa, ga, False)
            if da * (ah - al) >= 0.0:
                hi = lo
            lo = (a, fa, da)
    return None


def _strong_wolfe(fun, x, f0, g0, p, a1, bc: BfgsConfig):
    """Step satisfying the strong Wolfe conditions, or None after ``max_ls_trials`` evaluations.

    The step is ``(a, f, x, g, kink)``; ``kink`` marks a step accepted on
    sufficient decrease alone because the objective is not differentiable there.
    """
    d0 = float(g0 @ p)
    evals = [0]
    cache = {}

    def phi(a):
        if a not in cache:
            xa = x + a * p
            fa, ga = fun(xa)
            evals[0] += 1
            if not _finite(fa, ga):
                raise _NonFinite(f"non-finite loss or gradient at line-search step {a:.3g}")
            cache[a] = (fa, float(ga @ p), xa, ga)
        return cache[a]

    prev = (0.0, f0, d0)
    a = a1
    out = None
    while evals[0] < bc.max_ls_trials:
        fa, da, xa, ga = phi(a)
        if fa > f0 + bc.c1 * a * d0 or (prev[0] > 0.0 and fa >= prev[1]):
            out = _zoom(phi, prev, (a, fa, da), f0, d0, bc, evals)
            break
        if abs(da) <= -bc.c2 * d0:
            out = (a, fa, xa, ga, False)
            break
        if da >= 0.0:
            out = _zoom(phi, (a, fa, da), prev, f0, d0, bc, evals)
            break
        prev = (a, fa, da)
        a = min(2.0 * a, bc.max_step)
    return out, evals[0]


def _descent_fallback(fun, x, f, g, trials):
    """Backtracking Armijo step along -g; None if no decrease is found."""
    a = 1.0 / max(np.linalg.norm(g), 1e-300)
    for _ in range(trials):
        xa = x - a * g
        fa, ga = fun(xa)
        if not _finite(fa, ga):
            raise _NonFinite("non-finite loss or gradient in the descent fallback")
        if fa < f - 1e-4 * a * float(g @ g):
            return a, fa, xa, ga, True
        a *= 0.5
    return None


def _bfgs(fun, x, cfg, report) -> OptResult:
    bc = cfg.bfgs
    rec = _Recorder(cfg, report)
    n = x.size
    H = np.eye(n)
    scaled = False
    f, g = fun(x)
    nev = 1
    if not _finite(f, g):
        _abort(rec, x, f, 0, nev, "non-finite loss or gradient at the initial point")
    rec.log(0, f, g)
    resets = fallbacks = kinks = 0
    it = 0
    status = None
    while True:
        status = rec.stop_reason(it, g)
        if status:
            break
        it += 1
        p = -H @ g
        if not g @ p < 0.0:
            H = np.eye(n)
            scaled = False
            resets += 1
            p = -g
        a1 = 1.0 if scaled else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300))
        try:
            step, used = _strong_wolfe(fun, x, f, g, p, a1, bc)
            nev += used
            if step is None:
                fallbacks += 1
                step = _descent_fallback(fun, x, f, g, bc.max_ls_trials)
                nev += bc.max_ls_trials if step is None else 1
        except _NonFinite as exc:
            _abort(rec, x, f, it, nev, f"{exc} at iteration {it}", n_resets=resets, n_fallbacks=fallbacks)
        if step is None:
            status = "line_search_failed"
            rec.log(it, f, g)
            break
        _, f_new, x_new, g_new, kink = step
        kinks += kink
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            H = 0.5 * (H + H.T)
        else:
            H = np.eye(n)
            scaled = False
            resets += 1
        x, f, g = x_new, f_new, g_new
        rec.log(it, f, g)
    return OptResult(x, float(f), status, it, rec.trace, resets, fallbacks, nev, rec.ms(), kink_steps=kinks)
