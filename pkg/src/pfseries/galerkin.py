"""Fixed-grid Galerkin discretisation: partitions, bases, assembly, Ulam matrices and the dense solve."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from . import geometry, maps
from .maps import DomainBox, MapDescriptor
from .quadrature import QuadRule, make_fixed_rule
from .transfer import DampedProblem, Field


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Partition:
    domain: DomainBox
    cells_per_dim: tuple[int, ...]

    def __post_init__(self):
        cells = tuple(int(c) for c in np.broadcast_to(self.cells_per_dim, (self.domain.dim,)))
        if any(c < 1 for c in cells):
            raise ValueError("need at least one cell per dimension")
        object.__setattr__(self, "cells_per_dim", cells)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_dim))

    @property
    def widths(self) -> np.ndarray:
        return self.domain.lengths / np.asarray(self.cells_per_dim)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    def cell_bounds(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.unravel_index(m, self.cells_per_dim)
        lo = np.asarray(self.domain.lo) + np.asarray(idx) * self.widths
        return lo, lo + self.widths

    def all_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.stack(np.unravel_index(np.arange(self.n_cells), self.cells_per_dim), axis=1)
        lo = np.asarray(self.domain.lo) + idx * self.widths
        return lo, lo + self.widths

    def cell_index(self, x) -> np.ndarray:
        pts = self.domain.coords(x)
        rel = (pts - np.asarray(self.domain.lo)) / self.widths
        ij = np.clip(np.floor(rel).astype(int), 0, np.asarray(self.cells_per_dim) - 1)
        flat = np.ravel_multi_index(tuple(ij.T), self.cells_per_dim)
        return flat.reshape(self.domain.value_shape(x))


BASIS_KINDS = ("indicator", "hat")


@dataclass(frozen=True)
class Basis:
    kind: str
    partition: Partition

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"basis kind must be one of {BASIS_KINDS}")
        if self.kind == "hat" and self.partition.domain.dim != 1:
            raise ValueError("hat functions are only available in 1D")

    @property
    def size(self) -> int:
        if self.kind == "indicator":
            return self.partition.n_cells
        return self.partition.cells_per_dim[0] + 1

    @property
    def dim(self) -> int:
        return self.partition.domain.dim

    @property
    def orthonormal(self) -> bool:
        return self.kind == "indicator"

    @cached_property
    def nodes(self) -> np.ndarray:
        """Nodal points of the hat basis."""
        if self.kind != "hat":
            raise AttributeError("only hat bases have nodes")
        d = self.partition.domain
        return np.linspace(d.lo[0], d.hi[0], self.size)

    def evaluate(self, x) -> np.ndarray:
        """Matrix of basis values, shape ``value_shape(x) + (size,)``."""
        shape = self.partition.domain.value_shape(x)
        if self.kind == "indicator":
            idx = self.partition.cell_index(x).ravel()
            out = np.zeros((idx.size, self.size))
            out[np.arange(idx.size), idx] = 1.0 / np.sqrt(self.partition.cell_volume)
            return out.reshape(shape + (self.size,))
        x = np.asarray(x, dtype=float)
        h = self.partition.widths[0]
        out = np.maximum(0.0, 1.0 - np.abs(x.reshape(-1, 1) - self.nodes[None, :]) / h)
        return out.reshape(shape + (self.size,))

    def expand(self, x, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if self.kind == "indicator":
            idx = self.partition.cell_index(x)
            return coeffs[idx] / np.sqrt(self.partition.cell_volume)
        return self.evaluate(x) @ coeffs

    def function(self, m: int) -> Field:
        e = np.zeros(self.size)
        e[m] = 1.0
        return Field(lambda x: self.expand(x, e), self.dim, "galerkin", f"{self.kind}[{m}]")

    @property
    def functions(self) -> list[Field]:
        return [self.function(m) for m in range(self.size)]

    def aligned_rule(self, n_per_cell: int = 4, refine: int = 2) -> QuadRule:
        """Composite Gauss rule with panels on the cell edges (split ``refine`` times)."""
        cells = np.asarray(self.partition.cells_per_dim) * refine
        return make_fixed_rule(self.partition.domain, n_per_cell, cells)


def indicator_basis(domain: DomainBox, cells_per_dim) -> Basis:
    return Basis("indicator", Partition(domain, cells_per_dim))


def hat_basis(domain: DomainBox, n_intervals: int) -> Basis:
    return Basis("hat", Partition(domain, (int(n_intervals),)))


@dataclass
class GalerkinSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    basis: Basis = field(repr=False, default=None)

    def __post_init__(self):
        M = len(self.rhs)
        if self.matrix.shape != (M, M):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match rhs length {M}")
        if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(self.rhs))):
            raise ValueError("Galerkin system has non-finite entries")


def pf_basis_matrix(m: MapDescriptor, basis: Basis, x) -> np.ndarray:
    out = None
    for y, jac in maps.preimage_branches(m, x):
        term = jac[..., None] * basis.evaluate(y)
        out = term if out is None else out + term
    return out


def assemble(prob: DampedProblem, basis: Basis, rule: QuadRule | None = None,
             load_rule: QuadRule | None = None) -> GalerkinSystem:
    """Matrix a_mk = b(g_k, g_m) and load b_m = l(g_m) by quadrature.

    Indicator bases use the Koopman form int g_k (g_m - alpha K g_m); hat bases
    use the transfer-operator form int (g_k - alpha P g_k) g_m. The default rule
    is a composite Gauss rule aligned with (a refinement of) the partition.
    """
    rule = rule or basis.aligned_rule()
    load_rule = load_rule or rule
    a = prob.alpha
    x, w = rule.nodes, rule.weights
    G = basis.evaluate(x)
    if basis.kind == "indicator":
        KG = basis.evaluate(maps.forward(prob.map, x))
        A = (G - a * KG).T @ (w[:, None] * G)
    else:
        PG = pf_basis_matrix(prob.map, basis, x)
        A = G.T @ (w[:, None] * (G - a * PG))
    GL = basis.evaluate(load_rule.nodes)
    rhs = GL.T @ (load_rule.weights * prob.f0(load_rule.nodes))
    return GalerkinSystem(A, rhs, basis)


def solve(sys: GalerkinSystem, pivot_tol: float = 1e-14) -> np.ndarray:
    """Dense LU with partial pivoting."""
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularSystemError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(sys.matrix, check_finite=True)
    small = np.abs(np.diag(lu)).min()
    if small < pivot_tol:
        raise SingularSystemError(f"pivot {small:.3e} below {pivot_tol:g}; the system is singular")
    c = scipy.linalg.lu_solve((lu, piv), sys.rhs)
    res = np.max(np.abs(sys.matrix @ c - sys.rhs))
    scale = max(np.max(np.abs(sys.rhs)), np.finfo(float).tiny)
    if res > 1e-10 * scale:
        raise SingularSystemError(f"solve residual {res:.3e} exceeds 1e-10 * |b|")
    return c


def galerkin_field(basis: Basis, coeffs) -> Field:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ValueError(f"expected {basis.size} coefficients, got {coeffs.shape}")
    return Field(lambda x: basis.expand(x, coeffs), basis.dim, "galerkin", f"u_M[{basis.kind}]")


def l2_projection(basis: Basis, u: Field, rule: QuadRule | None = None,
                  load_rule: QuadRule | None = None) -> np.ndarray:
    """Coefficients of the L2-orthogonal projection of ``u`` onto span(basis)."""
    rule = rule or basis.aligned_rule()
    load_rule = load_rule or rule
    G = basis.evaluate(rule.nodes)
    gram = G.T @ (rule.weights[:, None] * G)
    GL = basis.evaluate(load_rule.nodes)
    rhs = GL.T @ (load_rule.weights * u(load_rule.nodes))
    return np.linalg.solve(gram, rhs)


def nodal_interpolant(basis: Basis, u: Field) -> np.ndarray:
    return u(basis.nodes)


# --- Ulam matrices ------------------------------------------------------------


def ulam_matrix(m: MapDescriptor, partition: Partition, sampler: str = "exact",
                n_samples: int = 100_000, seed: int = 42) -> np.ndarray:
    """P_M with p_mk = mu(S^-1(omega_m) & omega_k) / mu(omega_k); columns sum to one."""
    if sampler == "exact":
        if m.id == "tent":
            return _ulam_exact_tent(partition)
        if m.piecewise_affine:
            return _ulam_exact_affine(m, partition)
        raise ValueError(f"exact Ulam matrix is not available for {m.id!r}; use monte_carlo")
    if sampler == "monte_carlo":
        return _ulam_monte_carlo(m, partition, n_samples, seed)
    raise ValueError(f"sampler must be 'exact' or 'monte_carlo', got {sampler!r}")


def _ulam_exact_tent(partition: Partition) -> np.ndarray:
    M = partition.n_cells
    lo, hi = partition.all_bounds()
    lo, hi = lo[:, 0], hi[:, 0]
    P = np.zeros((M, M))
    for mi in range(M):
        # preimage of [a, b] under the tent map
        pieces = [(0.5 * lo[mi], 0.5 * hi[mi]), (1.0 - 0.5 * hi[mi], 1.0 - 0.5 * lo[mi])]
        for k in range(M):
            meas = 0.0
            for a, b in pieces:
                s, e = geometry.interval_intersection(a, b, lo[k], hi[k])
                meas += e - s
            P[mi, k] = meas / (hi[k] - lo[k])
    return P


def _ulam_exact_affine(m: MapDescriptor, partition: Partition) -> np.ndarray:
    # mu(S^-1(w_m) & w_k) = sum over pieces of area(A w_k + t) & w_m, since |det A| = 1
    M = partition.n_cells
    lo, hi = partition.all_bounds()
    P = np.zeros((M, M))
    for piece in maps.affine_pieces(m):
        for k in range(M):
            img = geometry.affine_image(geometry.box_polygon(lo[k], hi[k]), piece.A, piece.t)
            ilo, ihi = img.min(axis=0), img.max(axis=0)
            hit = np.flatnonzero(np.all((hi > ilo) & (lo < ihi), axis=1))
            for mi in hit:
                area, _ = geometry.area_centroid(geometry.clip_box(img, lo[mi], hi[mi]))
                P[mi, k] += area * piece.jac_inv
    return P / partition.cell_volume


def _ulam_monte_carlo(m: MapDescriptor, partition: Partition, n_samples: int, seed: int) -> np.ndarray:
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    M = partition.n_cells
    rng = np.random.Generator(np.random.Philox(seed))
    lo, hi = partition.all_bounds()
    P = np.zeros((M, M))
    d = partition.domain.dim
    for k in range(M):
        u = rng.random((n_samples, d))
        pts = lo[k] + u * (hi[k] - lo[k])
        if d == 1:
            pts = pts[:, 0]
        dest = partition.cell_index(maps.forward(m, pts))
        P[:, k] = np.bincount(dest.ravel(), minlength=M) / n_samples
    return P
