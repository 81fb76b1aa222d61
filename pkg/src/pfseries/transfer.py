"""Transfer (Perron-Frobenius) and Koopman operators, the damped residual and the series oracle."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import maps
from .maps import MapDescriptor
from .quadrature import QuadRule, integrate, lp_norm

FIELD_TAGS = ("analytic", "network", "galerkin", "series")


class SeriesBudgetError(RuntimeError):
    pass


class Field:
    """A real function on a map's domain, evaluated on arrays of points.

    ``fn`` receives the points in the package convention (see ``maps``) and
    returns values of shape ``domain.value_shape(x)``.
    """

    def __init__(self, fn: Callable, dim: int, tag: str = "analytic", name: str = ""):
        if tag not in FIELD_TAGS:
            raise ValueError(f"unknown field tag {tag!r}")
        self.fn = fn
        self.dim = dim
        self.tag = tag
        self.name = name

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def __repr__(self):
        return f"Field({self.name or self.fn!r}, dim={self.dim}, tag={self.tag})"

    def _combine(self, other, op, symbol):
        if isinstance(other, Field):
            return Field(lambda x: op(self(x), other(x)), self.dim, self.tag,
                         f"({self.name} {symbol} {other.name})")
        c = float(other)
        return Field(lambda x: op(self(x), c), self.dim, self.tag, f"({self.name} {symbol} {c})")

    def __add__(self, other):
        return self._combine(other, np.add, "+")

    def __sub__(self, other):
        return self._combine(other, np.subtract, "-")

    def __mul__(self, other):
        return self._combine(other, np.multiply, "*")

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return Field(lambda x: -self(x), self.dim, self.tag, f"-{self.name}")


def constant(c: float, dim: int = 1) -> Field:
    def fn(x):
        shape = x.shape if dim == 1 else x.shape[:-1]
        return np.full(shape, float(c))

    return Field(fn, dim, name=f"{c}")


def _split(dim, x):
    if dim == 1:
        return (x,)
    return x[..., 0], x[..., 1]


@dataclass(frozen=True)
class DampedProblem:
    map: MapDescriptor
    alpha: float
    f0: Field
    p_exponent: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 1.0 < self.p_exponent < np.inf:
            raise ValueError(f"p_exponent must lie in (1, inf), got {self.p_exponent}")

    @property
    def dim(self) -> int:
        return self.map.dim

    def check_nonnegative(self, rule: QuadRule) -> bool:
        vals = self.f0(rule.nodes)
        ok = bool(np.all(vals >= -1e-14))
        if not ok:
            warnings.warn(
                f"initial density is negative at some quadrature nodes (min {vals.min():.3g})",
                stacklevel=2,
            )
        return ok


def apply_pf(m: MapDescriptor, f: Field) -> Field:
    def fn(x):
        total = None
        for y, jac in maps.preimage_branches(m, x):
            term = jac * f(y)
            total = term if total is None else total + term
        return total

    return Field(fn, f.dim, f.tag, f"P[{f.name}]")


def apply_koopman(m: MapDescriptor, v: Field) -> Field:
    return Field(lambda x: v(maps.forward(m, x)), v.dim, v.tag, f"K[{v.name}]")


def residual(prob: DampedProblem, u: Field) -> Field:
    Pu = apply_pf(prob.map, u)
    a = prob.alpha
    return Field(lambda x: prob.f0(x) - u(x) + a * Pu(x), u.dim, u.tag, "residual")


def bilinear_b(prob: DampedProblem, u: Field, v: Field, rule: QuadRule, form: str = "pf") -> float:
    """b(u, v) by quadrature, either as int (u - a Pu) v or as int u (v - a Kv)."""
    a = prob.alpha
    if form == "pf":
        Pu = apply_pf(prob.map, u)
        return integrate(rule, lambda x: (u(x) - a * Pu(x)) * v(x))
    if form == "koopman":
        Kv = apply_koopman(prob.map, v)
        return integrate(rule, lambda x: u(x) * (v(x) - a * Kv(x)))
    raise ValueError(f"form must be 'pf' or 'koopman', got {form!r}")


def linear_l(prob: DampedProblem, v: Field, rule: QuadRule) -> float:
    return integrate(rule, lambda x: prob.f0(x) * v(x))


def norm(prob: DampedProblem, f: Field, rule: QuadRule) -> float:
    return lp_norm(rule, f, prob.p_exponent)


# --- truncated power series -------------------------------------------------


@dataclass(frozen=True)
class SeriesOptions:
    direct_max_terms: int = 25
    grid_size: int = 10_000
    budget: float = 2e9
    chunk_elems: int = 1 << 22


def truncated_series(prob: DampedProblem, n_terms: int, options: SeriesOptions | None = None) -> Field:
    """Field x -> sum_{k=0}^{N} alpha^k (P^k f0)(x).

    Invertible maps iterate the inverse map (cost O(N) per point). The tent map
    expands all 2^k preimages directly up to ``direct_max_terms`` and switches
    to a cached uniform grid with linear interpolation beyond that.
    """
    if n_terms < 0:
        raise ValueError("n_terms must be non-negative")
    opts = options or SeriesOptions()
    m, a, f0 = prob.map, prob.alpha, prob.f0
    N = int(n_terms)

    if m.invertible:
        def fn(x):
            pts = m.domain.coords(x)
            if pts.shape[0] * (N + 1) > opts.budget:
                raise SeriesBudgetError(f"{pts.shape[0]} points x {N + 1} terms exceeds budget")
            shape = m.domain.value_shape(x)
            y = pts.reshape(shape + (m.dim,))
            total = f0(y)
            weight = np.ones(shape)
            coef = 1.0
            for _ in range(N):
                weight = weight * maps.jac_det_inverse(m, y)
                y = maps.inverse(m, y)
                coef *= a
                total = total + coef * weight * f0(y)
            return total

        return Field(fn, m.dim, "series", f"series[{N}]")

    if m.id != "tent":
        raise NotImplementedError(m.id)

    if N <= opts.direct_max_terms:
        def fn(x):
            x = np.asarray(x, dtype=float)
            flat = x.ravel()
            if flat.size * 2.0 ** (N + 1) > opts.budget:
                raise SeriesBudgetError(
                    f"{flat.size} points x 2^{N + 1} preimages exceeds budget {opts.budget:g}"
                )
            out = np.empty(flat.size)
            chunk = max(1, opts.chunk_elems >> N)
            for s in range(0, flat.size, chunk):
                out[s:s + chunk] = _tent_series_direct(f0, flat[s:s + chunk], a, N)
            return out.reshape(x.shape)

        return Field(fn, 1, "series", f"series[{N}]")

    grid, tail = _tent_series_grid(f0, a, N, opts.grid_size)

    def fn(x):
        x = np.asarray(x, dtype=float)
        return f0(x) + np.interp(x, grid, tail)

    return Field(fn, 1, "series", f"series[{N}]~grid")


def _tent_series_direct(f0: Field, x: np.ndarray, a: float, N: int) -> np.ndarray:
    pts = x[:, None]
    total = f0(x).copy()
    coef = 1.0
    for _ in range(N):
        pts = np.concatenate([0.5 * pts, 1.0 - 0.5 * pts], axis=1)
        coef *= a
        total += coef * f0(pts).mean(axis=1)
    return total


def _tent_series_grid(f0: Field, a: float, N: int, size: int):
    grid = (np.arange(size) + 0.5) / size
    g = f0(grid)
    tail = np.zeros(size)
    coef = 1.0
    for _ in range(N):
        g = 0.5 * np.interp(0.5 * grid, grid, g) + 0.5 * np.interp(1.0 - 0.5 * grid, grid, g)
        coef *= a
        tail += coef * g
    return grid, tail


# --- manufactured solutions and the 2D initial densities ---------------------

SMOOTH_EXP = "smooth_exp"
SINGULAR = "singular"
CIRCLE_F0 = "circle_f0"
STANDARD_F0 = "standard_f0"
UNIT = "unit"
CASES = (SMOOTH_EXP, SINGULAR, CIRCLE_F0, STANDARD_F0, UNIT)

ALPHA_MAX_SMOOTH = 2.0 / (1.0 + np.e)
ALPHA_MAX_SINGULAR = 2.0 / (1.0 + 2.0 ** (1.0 / 3.0))


def manufactured(case: str, alpha: float) -> tuple[Field, Field]:
    """Exact solution and matching initial density for the tent map."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    a = float(alpha)
    if case == SMOOTH_EXP:
        if a > ALPHA_MAX_SMOOTH:
            warnings.warn(f"f0 is negative somewhere for alpha > {ALPHA_MAX_SMOOTH:.4f}", stacklevel=2)
        u = Field(np.exp, 1, name="exp")
        f0 = Field(lambda x: np.exp(x) - 0.5 * a * np.exp(0.5 * x) - 0.5 * a * np.exp(1.0 - 0.5 * x),
                   1, name="f0_smooth")
        return u, f0
    if case == SINGULAR:
        if a > ALPHA_MAX_SINGULAR:
            warnings.warn(f"f0 is negative somewhere for alpha > {ALPHA_MAX_SINGULAR:.4f}", stacklevel=2)
        u = Field(lambda x: 1.0 + np.cbrt(x) ** -1, 1, name="1+x^-1/3")
        f0 = Field(lambda x: (1.0 - a) + np.cbrt(x) ** -1 - 0.5 * a * np.cbrt(0.5 * x) ** -1
                   - 0.5 * a * np.cbrt(1.0 - 0.5 * x) ** -1, 1, name="f0_singular")
        return u, f0
    raise ValueError(f"no manufactured solution for case {case!r}")


def circle_f0() -> Field:
    def fn(x):
        phi, psi = x[..., 0], x[..., 1]
        inside = (phi > np.pi / 2) & (phi < 1.5 * np.pi) & (psi > -np.pi / 4) & (psi < np.pi / 4)
        return np.where(inside, np.cos(phi) ** 2 * np.cos(2.0 * psi) ** 2, 0.0)

    return Field(fn, 2, name="f0_circle")


def standard_f0() -> Field:
    lo, hi = 0.75 * np.pi, 1.25 * np.pi

    def fn(x):
        theta, p = x[..., 0], x[..., 1]
        inside = (theta > lo) & (theta < hi) & (p > lo) & (p < hi)
        return np.where(inside, np.cos(2.0 * theta) ** 2 * np.cos(2.0 * p) ** 2, 0.0)

    return Field(fn, 2, name="f0_standard")


def make_problem(case: str, alpha: float, k_param: float = 2.4, p: float = 2.0):
    """Problem for a named case, plus the exact solution when one is known."""
    if case in (SMOOTH_EXP, SINGULAR):
        u, f0 = manufactured(case, alpha)
        return DampedProblem(maps.tent(), alpha, f0, p), u
    if case == UNIT:
        # f0 = 1 is invariant under the tent transfer operator, so u = 1 / (1 - alpha)
        return DampedProblem(maps.tent(), alpha, constant(1.0), p), constant(1.0 / (1.0 - alpha))
    if case == CIRCLE_F0:
        return DampedProblem(maps.circle_boundary(), alpha, circle_f0(), p), None
    if case == STANDARD_F0:
        return DampedProblem(maps.standard_map(k_param), alpha, standard_f0(), p), None
    raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
