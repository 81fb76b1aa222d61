"""Exact integrals of ReLU networks over intervals and convex polygons.

A shallow ReLU network is piecewise linear, so its integral over a convex
region only needs the area and centroid of the region clipped by each
neuron's active half-plane. This gives round-off-level values of the tested
residuals ``int (f0 - u + alpha P u) g_m`` for indicator test functions on
piecewise-affine maps, through either the transfer-operator form or the
Koopman form.
"""
from __future__ import annotations

import numpy as np

from . import geometry, maps
from .network import NetParams


def _active_interval(w, b, lo, hi):
    # {x in [lo, hi] : w x + b > 0}, vectorised over neurons
    with np.errstate(divide="ignore", invalid="ignore"):
        root = -b / w
    s = np.where(w > 0, np.maximum(lo, root), lo)
    e = np.where(w < 0, np.minimum(hi, root), hi)
    zero = w == 0
    s = np.where(zero, lo, s)
    e = np.where(zero, np.where(b > 0, hi, lo), e)
    e = np.maximum(e, s)
    return s, e


def integrate_region(params: NetParams, region, B=None, s=None, kappa: float = 1.0):
    """``kappa * int_region u(B y + s) dy`` and its gradient in the flat parameter ordering.

    ``region`` is ``(lo, hi)`` in 1D or a convex polygon (K, 2) in 2D.
    """
    d = params.input_dim
    B = np.eye(d) if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    s = np.zeros(d) if s is None else np.atleast_1d(np.asarray(s, dtype=float))
    W, b, c = params.inner_weights, params.inner_biases, params.outer_weights
    Wt = W @ B  # rows are B^T w_j
    bt = b + W @ s
    n = params.n_hidden
    if d == 1:
        lo, hi = float(region[0]), float(region[1])
        vol = max(hi - lo, 0.0)
        a0, a1 = _active_interval(Wt[:, 0], bt, lo, hi)
        area = a1 - a0
        cent = (0.5 * (a0 + a1))[:, None]
    else:
        poly = np.asarray(region, dtype=float)
        vol, _ = geometry.area_centroid(poly)
        area = np.zeros(n)
        cent = np.zeros((n, 2))
        for j in range(n):
            q = geometry.clip_halfplane(poly, Wt[j], bt[j])
            area[j], cent[j] = geometry.area_centroid(q)
    relu_int = area * (np.einsum("ij,ij->i", Wt, cent) + bt)
    value = kappa * (c @ relu_int + params.outer_bias * vol)
    g_W = kappa * (c * area)[:, None] * (cent @ B.T + s)
    g_b = kappa * c * area
    g_c = kappa * relu_int
    grad = np.concatenate([g_W.ravel(), g_b, g_c, [kappa * vol]])
    return float(value), grad


def _box_region(lo, hi, dim):
    if dim == 1:
        return (float(lo[0]), float(hi[0]))
    return geometry.box_polygon(lo, hi)


def _pf_regions(m: maps.MapDescriptor, lo, hi):
    """Pieces of int_{cell} (P u)(y) dy as (region, B, s, kappa) with u evaluated at B y + s."""
    dom = m.domain
    out = []
    for piece in maps.affine_pieces(m):
        B = piece.A_inv
        s = -B @ piece.t
        if m.dim == 1:
            a, b_ = sorted((piece.A[0, 0] * dom.lo[0] + piece.t[0], piece.A[0, 0] * dom.hi[0] + piece.t[0]))
            r0, r1 = max(a, lo[0]), min(b_, hi[0])
            if r1 > r0:
                out.append(((r0, r1), B, s, piece.jac_inv))
        else:
            img = geometry.affine_image(geometry.box_polygon(dom.lo, dom.hi), piece.A, piece.t)
            poly = geometry.clip_box(img, lo, hi)
            if len(poly):
                out.append((poly, B, s, piece.jac_inv))
    return out


def _koopman_regions(m: maps.MapDescriptor, lo, hi):
    """Pieces of {x : S x in cell} as regions over which u itself is integrated."""
    dom = m.domain
    out = []
    for piece in maps.affine_pieces(m):
        B = piece.A_inv
        s = -B @ piece.t
        if m.dim == 1:
            a, b_ = sorted((B[0, 0] * lo[0] + s[0], B[0, 0] * hi[0] + s[0]))
            r0, r1 = max(a, dom.lo[0]), min(b_, dom.hi[0])
            if r1 > r0:
                out.append((r0, r1))
        else:
            pre = geometry.affine_image(geometry.box_polygon(lo, hi), B, s)
            poly = geometry.clip_box(pre, dom.lo, dom.hi)
            if len(poly):
                out.append(poly)
    return out


def tested_network_terms(params: NetParams, m: maps.MapDescriptor, alpha: float, partition,
                         path: str = "pf"):
    """Exact ``b(u, g_m)`` for every normalised indicator g_m, with its Jacobian.

    Returns ``(values (M,), jac (M, n_params))``.
    """
    if not m.piecewise_affine:
        raise maps.UnsupportedOperation(f"exact integration needs a piecewise-affine map, not {m.id!r}")
    M = partition.n_cells
    lo_all, hi_all = partition.all_bounds()
    norm = 1.0 / np.sqrt(partition.cell_volume)
    vals = np.zeros(M)
    jac = np.zeros((M, params.n_params))
    for k in range(M):
        lo, hi = lo_all[k], hi_all[k]
        v, g = integrate_region(params, _box_region(lo, hi, m.dim))
        if path == "pf":
            for region, B, s, kappa in _pf_regions(m, lo, hi):
                vp, gp = integrate_region(params, region, B, s, kappa)
                v -= alpha * vp
                g = g - alpha * gp
        elif path == "koopman":
            for region in _koopman_regions(m, lo, hi):
                vk, gk = integrate_region(params, region)
                v -= alpha * vk
                g = g - alpha * gk
        else:
            raise ValueError(f"path must be 'pf' or 'koopman', got {path!r}")
        vals[k] = norm * v
        jac[k] = norm * g
    return vals, jac
