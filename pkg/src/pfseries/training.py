"""Training drivers: minimise a loss over network parameters, and alpha-continuation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import optim
from .losses import Loss
from .network import NetParams
from .optim import OptConfig, OptimizationAborted


@dataclass
class TrainReport:
    final_loss: float
    initial_loss: float
    status: str
    n_iters: int
    trace: list = field(default_factory=list)
    n_resets: int = 0
    n_fallbacks: int = 0
    wall_ms: float = 0.0
    alpha: float | None = None
    message: str = ""


def _objective(loss: Loss, template: NetParams):
    def fun(flat):
        return loss.squared_and_grad(template.with_flat(flat))

    return fun


def _report(res: optim.OptResult, alpha) -> TrainReport:
    initial = res.trace[0][1] if res.trace else float("nan")
    final = res.trace[-1][1] if res.trace else float(np.sqrt(res.fun))
    return TrainReport(final, initial, res.status, res.n_iters, res.trace, res.n_resets,
                       res.n_fallbacks, res.wall_ms, alpha, res.message)


def minimize(loss: Loss, params0: NetParams, opt: OptConfig | None = None) -> tuple[NetParams, TrainReport]:
    """Train ``params0`` on ``loss``; the squared loss is minimised, the loss itself is reported.

    Raises ``OptimizationAborted`` (with the partial trace) on non-finite values.
    """
    if not params0.is_finite():
        raise ValueError("initial parameters are not finite")
    res = optim.minimize(_objective(loss, params0), params0.to_flat(), opt,
                         report=lambda f: float(np.sqrt(max(f, 0.0))))
    return params0.with_flat(res.x), _report(res, loss.alpha)


@dataclass
class ContinuationReport:
    params: NetParams
    stages: list
    completed: bool
    message: str = ""

    @property
    def final_loss(self) -> float:
        return self.stages[-1].final_loss if self.stages else float("nan")


def continuation(alphas, make_loss: Callable[[float], Loss], params0: NetParams,
                 opt: OptConfig | None = None, iters_per_stage=None) -> ContinuationReport:
    """Train at alphas[0] from ``params0``, then warm-start each later stage from the previous one.

    ``iters_per_stage`` optionally overrides ``opt.max_iters`` stage by stage.
    An aborted stage ends the run with the completed stages reported.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("need at least one alpha")
    if any(not 0.0 < a < 1.0 for a in alphas) or any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly increasing in (0, 1)")
    opt = opt or OptConfig()
    if iters_per_stage is None:
        iters_per_stage = [opt.max_iters] * len(alphas)
    if len(iters_per_stage) != len(alphas):
        raise ValueError("iters_per_stage must match the alpha sequence")
    params = params0
    stages = []
    for a, iters in zip(alphas, iters_per_stage):
        try:
            params, rep = minimize(make_loss(a), params, dataclasses.replace(opt, max_iters=int(iters)))
        except OptimizationAborted as exc:
            return ContinuationReport(params, stages, False, f"stage alpha={a}: {exc}")
        stages.append(rep)
    return ContinuationReport(params, stages, True)
