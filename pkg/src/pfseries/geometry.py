"""Convex polygon clipping, areas and centroids (exact integration over piecewise-affine regions)."""
from __future__ import annotations

import numpy as np


def box_polygon(lo, hi) -> np.ndarray:
    (x0, y0), (x1, y1) = lo, hi
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def clip_halfplane(poly: np.ndarray, a: np.ndarray, c: float) -> np.ndarray:
    """Part of a convex polygon where ``a . x + c >= 0`` (Sutherland-Hodgman, one edge)."""
    if len(poly) == 0:
        return poly
    s = poly @ a + c
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        si, sj = s[i], s[j]
        if si >= 0.0:
            out.append(poly[i])
        if (si >= 0.0) != (sj >= 0.0):
            t = si / (si - sj)
            out.append(poly[i] + t * (poly[j] - poly[i]))
    if len(out) < 3:
        return np.empty((0, 2))
    return np.array(out)


def clip_box(poly: np.ndarray, lo, hi) -> np.ndarray:
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1.0
        poly = clip_halfplane(poly, e, -lo[k])
        poly = clip_halfplane(poly, -e, hi[k])
    return poly


def area_centroid(poly: np.ndarray) -> tuple[float, np.ndarray]:
    if len(poly) < 3:
        return 0.0, np.zeros(2)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    if abs(a) < 1e-300:
        return 0.0, poly.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return abs(a), np.array([cx, cy])


def affine_image(poly: np.ndarray, A: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = poly @ A.T + t
    if np.linalg.det(A) < 0:
        out = out[::-1]
    return out


def interval_intersection(a0, a1, b0, b1) -> tuple[float, float]:
    lo, hi = max(a0, b0), min(a1, b1)
    return (lo, hi) if hi > lo else (lo, lo)
