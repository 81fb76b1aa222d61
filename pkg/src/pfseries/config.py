"""Run configuration: nested dataclasses loaded from a YAML file, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

import yaml

from .transfer import CASES

METHODS = ("series", "galerkin", "pinns", "rvpinns")


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    case: str = "smooth_exp"
    alpha: float = 0.5
    k_param: float = 2.4
    p: float = 2.0


@dataclass
class QuadConfig:
    points_per_dim: int = 101
    cells_per_dim: int = 1


@dataclass
class NetConfig:
    n_hidden: int = 32
    init: str = "uniform"  # uniform | geometric | random2d
    r: float = 0.662
    seed: int = 0
    fit_outer: bool = True


@dataclass
class AdamSection:
    step: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainConfig:
    optimizer: str = "bfgs"  # bfgs | adam
    max_iters: int = 2000
    grad_tol: float = 1e-9
    loss_tol: float = 1e-12
    adam: AdamSection = field(default_factory=AdamSection)
    continuation_alphas: list = field(default_factory=list)
    continuation_iters: list = field(default_factory=list)  # per stage; empty: max_iters each


@dataclass
class LossConfig:
    test_cells: int = 8  # per dimension, RVPINNs only
    path: str = "pf"  # pf | koopman
    integration: str = "quadrature"  # quadrature | exact


@dataclass
class GalerkinConfig:
    basis: str = "hat"  # hat | indicator
    n: int = 32
    load_points: int = 0  # 0: use the partition-aligned rule for the load vector too


@dataclass
class SeriesConfig:
    n_terms: int = 20
    grid_points: int = 201


@dataclass
class SweepConfig:
    ns: list = field(default_factory=lambda: [4, 8, 16, 32])


@dataclass
class QuadStudyConfig:
    qs: list = field(default_factory=lambda: [11, 31, 101, 301])
    n_hidden: int = 32
    rel_tol: float = 1e-12


@dataclass
class ExperimentConfig:
    method: str = "pinns"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    quadrature: QuadConfig = field(default_factory=QuadConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    galerkin: GalerkinConfig = field(default_factory=GalerkinConfig)
    series: SeriesConfig = field(default_factory=SeriesConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    quad_study: QuadStudyConfig = field(default_factory=QuadStudyConfig)
    out_dir: str = "out"
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.method in METHODS, f"method must be one of {METHODS}, got {self.method!r}")
        pr = self.problem
        need(pr.case in CASES, f"problem.case must be one of {CASES}, got {pr.case!r}")
        need(0.0 < pr.alpha < 1.0, f"problem.alpha must lie in (0, 1), got {pr.alpha}")
        need(pr.p > 1.0, "problem.p must exceed 1")
        need(self.quadrature.points_per_dim >= 1 and self.quadrature.cells_per_dim >= 1,
             "quadrature sizes must be positive")
        need(self.net.n_hidden >= 1, "net.n_hidden must be positive")
        need(self.net.init in ("uniform", "geometric", "random2d"), f"unknown net.init {self.net.init!r}")
        need(0.0 < self.net.r < 1.0, "net.r must lie in (0, 1)")
        need(self.train.optimizer in ("bfgs", "adam"), f"unknown train.optimizer {self.train.optimizer!r}")
        need(self.train.max_iters >= 0, "train.max_iters must be non-negative")
        al = [float(a) for a in self.train.continuation_alphas]
        need(all(0.0 < a < 1.0 for a in al) and all(b > a for a, b in zip(al, al[1:])),
             "train.continuation_alphas must be strictly increasing in (0, 1)")
        ci = self.train.continuation_iters
        need(not ci or (len(ci) == len(al) and all(isinstance(k, int) and k >= 0 for k in ci)),
             "train.continuation_iters needs one non-negative integer per continuation alpha")
        need(self.loss.path in ("pf", "koopman"), f"unknown loss.path {self.loss.path!r}")
        need(self.loss.integration in ("quadrature", "exact"), f"unknown loss.integration {self.loss.integration!r}")
        need(self.loss.test_cells >= 1, "loss.test_cells must be positive")
        need(self.galerkin.basis in ("hat", "indicator"), f"unknown galerkin.basis {self.galerkin.basis!r}")
        need(self.galerkin.n >= 1, "galerkin.n must be positive")
        need(self.series.n_terms >= 0, "series.n_terms must be non-negative")
        ns = list(self.sweep.ns)
        need(len(ns) >= 2 and all(b > a > 0 for a, b in zip(ns, ns[1:])),
             "sweep.ns needs at least two increasing positive sizes")
        need(len(self.quad_study.qs) >= 2, "quad_study.qs needs at least two sizes")
        return self


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where or 'config'}")
    kw = {}
    for k, v in data.items():
        tp = hints[k]
        key = f"{where}.{k}" if where else k
        if dataclasses.is_dataclass(tp):
            kw[k] = _build(tp, v, key)
        else:
            kw[k] = _coerce(tp, v, key)
    return cls(**kw)


def _coerce(tp, v, key):
    try:
        if tp is bool:
            if not isinstance(v, bool):
                raise TypeError
            return v
        if tp in (int, float):
            if isinstance(v, bool):
                raise TypeError
            out = tp(v)
            if tp is int and out != v:
                raise TypeError
            return out
        if tp is str:
            if not isinstance(v, str):
                raise TypeError
            return v
        if tp is list:
            if not isinstance(v, list):
                raise TypeError
            return list(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot use {v!r} as {tp.__name__}") from None
    return v


def from_dict(data: dict | None) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}, "").validate()


def load(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return from_dict(data)


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)
