"""Convex polygon kernel: half-plane clipping, power cells, exact moments.

Polygons are ``(k, 2)`` float arrays listing vertices counterclockwise.  An
empty polygon has shape ``(0, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import ConvexHull, QhullError

EMPTY = np.zeros((0, 2))


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CellMoments:
    """Raw moments (int 1, int y, int |y|^2) of a polygon."""

    area: float
    first: np.ndarray
    second: float
    degenerate: bool = False

    @property
    def barycenter(self) -> np.ndarray:
        if self.degenerate:
            return np.full(2, np.nan)
        return self.first / self.area


def signed_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def is_convex(poly: np.ndarray, tol: float = 1e-12) -> bool:
    """Counterclockwise and convex (collinear vertices allowed)."""
    if len(poly) < 3:
        return False
    e = np.roll(poly, -1, axis=0) - poly
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale = np.max(np.abs(poly)) ** 2 + 1.0
    return signed_area(poly) > 0 and bool(np.all(cross >= -tol * scale))


def diameter(poly: np.ndarray) -> float:
    if len(poly) == 0:
        return 0.0
    d = poly[:, None, :] - poly[None, :, :]
    return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))


def clip_halfplane(poly: np.ndarray, a: np.ndarray, b: float) -> np.ndarray:
    """Intersect a convex polygon with ``{y : a.y <= b}``."""
    if len(poly) == 0:
        return poly
    s = poly @ a - b
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp, sq = s[i], s[(i + 1) % n]
        if sp <= 0:
            out.append(p)
        if (sp <= 0) != (sq <= 0):
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
    if len(out) < 3:
        return EMPTY
    return np.array(out)


def power_halfplane(xj, fj, xk, fk):
    """Half-plane ``|y-xj|^2 - fj <= |y-xk|^2 - fk`` as ``(a, b)`` with a.y <= b."""
    a = 2.0 * (xk - xj)
    b = float(xk @ xk - xj @ xj - fk + fj)
    return a, b


def power_cell(sites: np.ndarray, weights: np.ndarray, j: int,
               domain: np.ndarray) -> np.ndarray:
    """Laguerre cell of site ``j`` clipped to a convex domain.

    Reference implementation: clips against every other bisector, O(N).
    """
    sites = np.asarray(sites, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if len(sites) == 0:
        raise GeometryError("no sites")
    if not 0 <= j < len(sites):
        raise GeometryError(f"site index {j} out of range")
    if not is_convex(domain):
        raise GeometryError("domain must be a convex counterclockwise polygon")
    cell = np.asarray(domain, dtype=float)
    for k in range(len(sites)):
        if k == j:
            continue
        a, b = power_halfplane(sites[j], weights[j], sites[k], weights[k])
        cell = clip_halfplane(cell, a, b)
        if len(cell) == 0:
            break
    return cell


def cell_moments(cell: np.ndarray, degenerate_area: float = 0.0) -> CellMoments:
    """Exact moments by signed triangle fan from the origin."""
    if len(cell) < 3:
        return CellMoments(0.0, np.zeros(2), 0.0, True)
    area, mx, my, m2 = _poly_moments(np.ascontiguousarray(cell, dtype=float))
    if area <= degenerate_area or area <= 0.0:
        return CellMoments(0.0, np.zeros(2), 0.0, True)
    return CellMoments(area, np.array([mx, my]), m2)


def transport_integrand(cell: np.ndarray, site) -> float:
    """Exact integral of ``|y - site|^2`` over the cell (unnormalized)."""
    mom = cell_moments(cell)
    if mom.degenerate:
        return 0.0
    s = np.asarray(site, dtype=float)
    return mom.second - 2.0 * float(mom.first @ s) + float(s @ s) * mom.area


@njit(cache=True)
def _poly_moments(p):
    n = p.shape[0]
    a = 0.0
    mx = 0.0
    my = 0.0
    m2 = 0.0
    for i in range(n):
        x0, y0 = p[i, 0], p[i, 1]
        x1, y1 = p[(i + 1) % n, 0], p[(i + 1) % n, 1]
        c = x0 * y1 - x1 * y0
        a += c
        mx += (x0 + x1) * c
        my += (y0 + y1) * c
        m2 += (x0 * x0 + x0 * x1 + x1 * x1 + y0 * y0 + y0 * y1 + y1 * y1) * c
    return a / 2.0, mx / 6.0, my / 6.0, m2 / 12.0


# ---------------------------------------------------------------------------
# Full diagram


@dataclass
class LaguerreDiagram:
    """Power diagram of N weighted sites restricted to a convex domain.

    ``edges`` lists shared interior edges as ``(j, k, length)`` with j < k.
    Moments are unnormalized integrals over each cell.
    """

    cells: list
    areas: np.ndarray
    firsts: np.ndarray
    seconds: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_len: np.ndarray

    def barycenters(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.firsts / self.areas[:, None]


@njit(cache=True)
def _clip_cell(j, pts, w, nbr, domain, buf_size):
    """Clip the domain against bisectors j|k for k in nbr.

    Returns vertex array and the label (neighbor index, -1 for the domain)
    of the edge leaving each vertex.
    """
    m = domain.shape[0]
    P = np.empty((buf_size, 2))
    L = np.empty(buf_size, np.int64)
    Q = np.empty((buf_size, 2))
    LQ = np.empty(buf_size, np.int64)
    S = np.empty(buf_size)
    for i in range(m):
        P[i, 0] = domain[i, 0]
        P[i, 1] = domain[i, 1]
        L[i] = -1
    n = m
    xj0 = pts[j, 0]
    xj1 = pts[j, 1]
    nj = xj0 * xj0 + xj1 * xj1
    for kk in range(nbr.shape[0]):
        k = nbr[kk]
        if k == j:
            continue
        a0 = 2.0 * (pts[k, 0] - xj0)
        a1 = 2.0 * (pts[k, 1] - xj1)
        b = pts[k, 0] ** 2 + pts[k, 1] ** 2 - nj - w[k] + w[j]
        anyout = False
        allout = True
        for i in range(n):
            s = a0 * P[i, 0] + a1 * P[i, 1] - b
            S[i] = s
            if s > 0.0:
                anyout = True
            else:
                allout = False
        if not anyout:
            continue
        if allout:
            return P[:0].copy(), L[:0].copy()
        q = 0
        for i in range(n):
            i1 = (i + 1) % n
            sp = S[i]
            sq = S[i1]
            pin = sp <= 0.0
            qin = sq <= 0.0
            if pin:
                Q[q, 0] = P[i, 0]
                Q[q, 1] = P[i, 1]
                LQ[q] = L[i]
                q += 1
                if not qin:
                    t = sp / (sp - sq)
                    Q[q, 0] = P[i, 0] + t * (P[i1, 0] - P[i, 0])
                    Q[q, 1] = P[i, 1] + t * (P[i1, 1] - P[i, 1])
                    LQ[q] = k
                    q += 1
            elif qin:
                t = sp / (sp - sq)
                Q[q, 0] = P[i, 0] + t * (P[i1, 0] - P[i, 0])
                Q[q, 1] = P[i, 1] + t * (P[i1, 1] - P[i, 1])
                LQ[q] = L[i]
                q += 1
        if q < 3:
            return P[:0].copy(), L[:0].copy()
        for i in range(q):
            P[i, 0] = Q[i, 0]
            P[i, 1] = Q[i, 1]
            L[i] = LQ[i]
        n = q
    return P[:n].copy(), L[:n].copy()


@njit(cache=True)
def _diagram_kernel(pts, w, nbr_ptr, nbr_idx, full, domain):
    N = pts.shape[0]
    areas = np.zeros(N)
    firsts = np.zeros((N, 2))
    seconds = np.zeros(N)
    cap = nbr_idx.shape[0] + 8 * N
    ei = np.empty(cap, np.int64)
    ek = np.empty(cap, np.int64)
    el = np.empty(cap)
    ne = 0
    everyone = np.arange(N)
    verts_ptr = np.zeros(N + 1, np.int64)
    chunks = []
    for j in range(N):
        if full[j]:
            nbr = everyone
        else:
            nbr = nbr_idx[nbr_ptr[j]:nbr_ptr[j + 1]]
        buf = domain.shape[0] + 2 * nbr.shape[0] + 4
        P, L = _clip_cell(j, pts, w, nbr, domain, buf)
        chunks.append(P)
        verts_ptr[j + 1] = verts_ptr[j] + P.shape[0]
        n = P.shape[0]
        if n < 3:
            continue
        a, mx, my, m2 = _poly_moments(P)
        areas[j] = a
        firsts[j, 0] = mx
        firsts[j, 1] = my
        seconds[j] = m2
        for i in range(n):
            k = L[i]
            if k >= 0 and ne < cap:
                i1 = (i + 1) % n
                dx = P[i1, 0] - P[i, 0]
                dy = P[i1, 1] - P[i, 1]
                ei[ne] = j
                ek[ne] = k
                el[ne] = np.sqrt(dx * dx + dy * dy)
                ne += 1
    all_verts = np.empty((verts_ptr[N], 2))
    for j in range(N):
        all_verts[verts_ptr[j]:verts_ptr[j + 1]] = chunks[j]
    return areas, firsts, seconds, ei[:ne], ek[:ne], el[:ne], all_verts, verts_ptr


def _candidate_neighbors(pts: np.ndarray, w: np.ndarray):
    """Neighbor candidates from the lifted convex hull (regular triangulation).

    Every pair sharing a Laguerre edge of positive length appears as a hull
    edge.  Sites that are not hull vertices (hidden, or merged by Qhull as
    coplanar) are flagged for clipping against every site.
    """
    N = len(pts)
    full = np.ones(N, dtype=np.bool_)
    pairs = np.zeros((0, 2), dtype=np.int64)
    if N >= 5:
        lifted = np.column_stack([pts, np.einsum("ij,ij->i", pts, pts) - w])
        try:
            hull = ConvexHull(lifted, qhull_options="Qt")
        except QhullError:
            hull = None
        if hull is not None:
            s = hull.simplices
            pairs = np.concatenate([s[:, [0, 1]], s[:, [1, 2]], s[:, [2, 0]]])
            keys = np.unique(np.concatenate([pairs[:, 0] * N + pairs[:, 1],
                                             pairs[:, 1] * N + pairs[:, 0]]))
            pairs = np.column_stack([keys // N, keys % N])
            full[:] = True
            full[hull.vertices] = False
    # nearest-first clipping shrinks cells quickly
    d = np.sum((pts[pairs[:, 0]] - pts[pairs[:, 1]]) ** 2, axis=1)
    order = np.lexsort((d, pairs[:, 0]))
    pairs = pairs[order]
    ptr = np.searchsorted(pairs[:, 0], np.arange(N + 1))
    return ptr.astype(np.int64), pairs[:, 1].astype(np.int64), full


def power_diagram(points: np.ndarray, weights: np.ndarray, domain: np.ndarray,
                  area_rtol: float = 1e-9) -> LaguerreDiagram:
    """All Laguerre cells of the weighted sites, clipped to ``domain``.

    Candidates come from the lifted hull; if the resulting cells fail to
    tile the domain, every cell is rebuilt against all bisectors.
    """
    pts = np.ascontiguousarray(points, dtype=float)
    w = np.ascontiguousarray(weights, dtype=float)
    dom = np.ascontiguousarray(domain, dtype=float)
    ptr, idx, full = _candidate_neighbors(pts, w)
    out = _diagram_kernel(pts, w, ptr, idx, full, dom)
    dom_area = signed_area(dom)
    if abs(out[0].sum() - dom_area) > area_rtol * dom_area:
        full[:] = True
        out = _diagram_kernel(pts, w, ptr, idx, full, dom)
    areas, firsts, seconds, ei, ek, el, verts, vptr = out
    cells = [verts[vptr[j]:vptr[j + 1]] for j in range(len(pts))]
    keep = (el > 0) & (ei < ek)
    return LaguerreDiagram(cells, areas, firsts, seconds, ei[keep], ek[keep], el[keep])


def regular_polygon(M: int, radius: float = 1.0) -> np.ndarray:
    t = 2 * np.pi * np.arange(M) / M
    return radius * np.column_stack([np.cos(t), np.sin(t)])
