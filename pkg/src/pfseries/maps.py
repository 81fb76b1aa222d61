"""Benchmark dynamical systems: tent map, circular billiard boundary map, standard map.

Point convention used throughout the package: a 1D map takes arrays of
coordinates of any shape, a 2D map takes arrays of shape ``(..., 2)``.
Outputs keep the input shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
DOMAIN_TOL = 1e-12

MAP_IDS = ("tent", "circle_boundary", "standard_map")


class DomainError(ValueError):
    pass


class UnsupportedOperation(RuntimeError):
    pass


@dataclass(frozen=True)
class DomainBox:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    periodic: tuple[bool, ...] = None

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        periodic = self.periodic if self.periodic is not None else (False,) * len(lo)
        periodic = tuple(bool(p) for p in periodic)
        if not (len(lo) == len(hi) == len(periodic)):
            raise ValueError("lo, hi and periodic must have equal length")
        if len(lo) not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {len(lo)}")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"need lo < hi in every dimension, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "periodic", periodic)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lengths(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.lengths))

    def coords(self, x) -> np.ndarray:
        """View ``x`` as an ``(N, dim)`` array of points."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return x.reshape(-1, 1)
        if x.shape[-1] != 2:
            raise ValueError(f"2D points need a trailing axis of length 2, got shape {x.shape}")
        return x.reshape(-1, 2)

    def restore(self, pts: np.ndarray, like) -> np.ndarray:
        like = np.asarray(like)
        if self.dim == 1:
            return pts.reshape(like.shape)
        return pts.reshape(like.shape)

    def value_shape(self, x) -> tuple[int, ...]:
        x = np.asarray(x)
        return x.shape if self.dim == 1 else x.shape[:-1]

    def check(self, pts: np.ndarray, tol: float = DOMAIN_TOL) -> None:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        bad = np.any((pts < lo - tol) | (pts > hi + tol) | ~np.isfinite(pts), axis=1)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DomainError(f"point {pts[i].tolist()} lies outside {self.lo}..{self.hi}")

    def wrap(self, pts: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into ``[lo, hi)``."""
        out = np.array(pts, dtype=float, copy=True)
        for i, per in enumerate(self.periodic):
            if per:
                out[:, i] = _mod(out[:, i], self.lo[i], self.hi[i])
        return out

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        pts = self.coords(x)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        inside = np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
        return inside.reshape(self.value_shape(x))

    def periodic_distance(self, a, b) -> np.ndarray:
        """Max-norm distance, measured around the circle in periodic coordinates."""
        pa, pb = self.coords(a), self.coords(b)
        d = np.abs(pa - pb)
        for i, per in enumerate(self.periodic):
            if per:
                L = self.hi[i] - self.lo[i]
                d[:, i] = np.minimum(d[:, i], L - d[:, i])
        return d.max(axis=1)


def _mod(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    L = hi - lo
    r = (x - lo) - np.floor((x - lo) / L) * L
    # rounding can land exactly on L for tiny negative inputs
    r = np.where(r >= L, r - L, r)
    r = np.where(r < 0.0, 0.0, r)
    return lo + r


@dataclass(frozen=True)
class MapDescriptor:
    id: str
    domain: DomainBox
    k_param: float = 2.4

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def invertible(self) -> bool:
        return self.id != "tent"

    @property
    def piecewise_affine(self) -> bool:
        return self.id in ("tent", "circle_boundary")


def tent() -> MapDescriptor:
    return MapDescriptor("tent", DomainBox((0.0,), (1.0,), (False,)))


def circle_boundary() -> MapDescriptor:
    return MapDescriptor(
        "circle_boundary", DomainBox((0.0, -np.pi / 2), (TWO_PI, np.pi / 2), (True, False))
    )


def standard_map(k_param: float = 2.4) -> MapDescriptor:
    return MapDescriptor(
        "standard_map", DomainBox((0.0, 0.0), (TWO_PI, TWO_PI), (True, True)), float(k_param)
    )


def make_map(map_id: str, k_param: float = 2.4) -> MapDescriptor:
    if map_id == "tent":
        return tent()
    if map_id == "circle_boundary":
        return circle_boundary()
    if map_id == "standard_map":
        return standard_map(k_param)
    raise ValueError(f"unknown map id {map_id!r}; expected one of {MAP_IDS}")


def forward(m: MapDescriptor, x) -> np.ndarray:
    pts = m.domain.coords(x)
    m.domain.check(pts)
    if m.id == "tent":
        s = pts[:, 0]
        out = np.where(s < 0.5, 2.0 * s, 2.0 - 2.0 * s)[:, None]
        out = np.clip(out, 0.0, 1.0)
    elif m.id == "circle_boundary":
        phi, psi = pts[:, 0], pts[:, 1]
        out = np.stack([phi + np.pi - 2.0 * psi, psi], axis=1)
    elif m.id == "standard_map":
        theta, p = pts[:, 0], pts[:, 1]
        p_new = p + m.k_param * np.sin(theta)
        out = np.stack([theta + p_new, p_new], axis=1)
    else:
        raise ValueError(f"unknown map id {m.id!r}")
    out = m.domain.wrap(out)
    return m.domain.restore(out, x)


def inverse(m: MapDescriptor, x):
    """Preimage of ``x``. The tent map is 2-to-1 and returns both branches as a tuple."""
    pts = m.domain.coords(x)
    m.domain.check(pts)
    if m.id == "tent":
        s = pts[:, 0]
        left = m.domain.restore((0.5 * s)[:, None], x)
        right = m.domain.restore((1.0 - 0.5 * s)[:, None], x)
        return left, right
    if m.id == "circle_boundary":
        phi, psi = pts[:, 0], pts[:, 1]
        out = np.stack([phi - np.pi + 2.0 * psi, psi], axis=1)
    elif m.id == "standard_map":
        theta, p = pts[:, 0], pts[:, 1]
        theta_old = theta - p
        out = np.stack([theta_old, p - m.k_param * np.sin(theta_old)], axis=1)
    else:
        raise ValueError(f"unknown map id {m.id!r}")
    out = m.domain.wrap(out)
    return m.domain.restore(out, x)


def jac_det_inverse(m: MapDescriptor, x) -> np.ndarray:
    if not m.invertible:
        raise UnsupportedOperation(
            "the tent map is not invertible; use preimage_branches for its transfer operator"
        )
    pts = m.domain.coords(x)
    m.domain.check(pts)
    return np.ones(m.domain.value_shape(x))


def jacobian_forward(m: MapDescriptor, x) -> np.ndarray:
    """Analytic Jacobian matrix of the forward map, shape ``(..., d, d)``."""
    pts = m.domain.coords(x)
    n = pts.shape[0]
    if m.id == "tent":
        J = np.where(pts[:, 0] < 0.5, 2.0, -2.0).reshape(n, 1, 1)
    elif m.id == "circle_boundary":
        J = np.broadcast_to(np.array([[1.0, -2.0], [0.0, 1.0]]), (n, 2, 2)).copy()
    else:
        kc = m.k_param * np.cos(pts[:, 0])
        J = np.empty((n, 2, 2))
        J[:, 0, 0] = 1.0 + kc
        J[:, 0, 1] = 1.0
        J[:, 1, 0] = kc
        J[:, 1, 1] = 1.0
    return J.reshape(m.domain.value_shape(x) + (m.dim, m.dim))


def preimage_branches(m: MapDescriptor, x) -> list[tuple[np.ndarray, np.ndarray]]:
    """List of ``(preimage points, |det J_inverse|)`` pairs, one per inverse branch.

    The transfer operator is ``Pf(x) = sum_b f(y_b) * jac_b`` over these branches.
    """
    if m.id == "tent":
        left, right = inverse(m, x)
        half = np.full(np.shape(x), 0.5)
        return [(left, half), (right, half)]
    return [(inverse(m, x), jac_det_inverse(m, x))]


@dataclass(frozen=True)
class AffinePiece:
    """One branch ``x -> A x + t`` of a piecewise-affine map (before periodic wrap).

    For every point of the domain exactly one piece sends it back into the
    domain, so a piece is valid exactly where its image lies in the box.
    """

    A: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)

    @property
    def A_inv(self) -> np.ndarray:
        return np.linalg.inv(self.A)

    @property
    def jac_inv(self) -> float:
        return abs(1.0 / np.linalg.det(self.A))


def affine_pieces(m: MapDescriptor) -> list[AffinePiece]:
    if m.id == "tent":
        return [
            AffinePiece(np.array([[2.0]]), np.array([0.0])),
            AffinePiece(np.array([[-2.0]]), np.array([2.0])),
        ]
    if m.id == "circle_boundary":
        A = np.array([[1.0, -2.0], [0.0, 1.0]])
        return [AffinePiece(A, np.array([np.pi - j * TWO_PI, 0.0])) for j in (0, 1)]
    raise UnsupportedOperation(f"map {m.id!r} is not piecewise affine")
