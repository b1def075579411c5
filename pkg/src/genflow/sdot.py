"""Semi-discrete optimal transport between N equal Diracs and Leb on a domain.

The Kantorovich dual is maximized over one weight per Dirac by damped Newton.
Masses are fractions of the domain area (Leb has mass 1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from .domain import DiscreteMap, Domain
from .geom2d import LaguerreDiagram, power_diagram

log = logging.getLogger(__name__)

COINCIDENCE_TOL = 1e-10


class TransportError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DiagonalError(ValueError):
    """Two map values coincide; the caller should jitter."""


@dataclass
class TransportResult:
    cost: float
    weights: np.ndarray
    diagram: LaguerreDiagram
    cell_masses: np.ndarray
    cell_barycenters: np.ndarray
    dual_value: float
    iterations: int
    residual: float
    dual_history: list = field(default_factory=list)


def coincident_pairs(points: np.ndarray, tol: float = COINCIDENCE_TOL) -> np.ndarray:
    return cKDTree(points).query_pairs(tol, output_type="ndarray")


def _evaluate(points, f, domain: Domain):
    diag = power_diagram(points, f, domain.polygon)
    A = domain.total_area
    masses = diag.areas / A
    sq = np.einsum("ij,ij->i", points, points)
    # int_cell |y - x|^2 assembled from raw moments
    integrand = diag.seconds - 2 * np.einsum("ij,ij->i", diag.firsts, points) + sq * diag.areas
    cost = float(integrand.sum() / A)
    dual = float(f.sum() / len(points) + cost - f @ masses)
    return diag, masses, cost, dual


def _mass_jacobian(points, diag: LaguerreDiagram, total_area: float):
    """d mass_j / d f_k for j, k >= 1 (the first weight is pinned).

    Entries are boundary length over twice the site distance.
    """
    N = len(points)
    i, k, L = diag.edge_i, diag.edge_j, diag.edge_len
    dist = np.linalg.norm(points[i] - points[k], axis=1)
    c = L / (2 * dist * total_area)
    d = np.bincount(i, c, N) + np.bincount(k, c, N)
    keep = (i > 0) & (k > 0)
    ii, kk, cc = i[keep] - 1, k[keep] - 1, c[keep]
    diag_idx = np.arange(N - 1)
    rows = np.concatenate([ii, kk, diag_idx])
    cols = np.concatenate([kk, ii, diag_idx])
    vals = np.concatenate([-cc, -cc, d[1:]])
    return sp.csc_matrix((vals, (rows, cols)), shape=(N - 1, N - 1))


def _feasible_start(points, domain: Domain):
    """Weights whose Laguerre diagram is the Voronoi diagram of z = s (x - c).

    With f_j = |x_j|^2 - s |x_j - c|^2 the power cells of the x_j coincide with
    the Voronoi cells of the affinely moved sites z_j; c and s are chosen so
    every z_j lies well inside the domain, hence every cell is nonempty.
    """
    poly = domain.polygon
    e = np.roll(poly, -1, axis=0) - poly
    n = np.column_stack([e[:, 1], -e[:, 0]]) / np.linalg.norm(e, axis=1)[:, None]
    inradius = float(np.min(np.einsum("ij,ij->i", n, poly)))
    c = points.mean(axis=0)
    spread = float(np.max(np.linalg.norm(points - c, axis=1)))
    s = 0.9 * inradius / spread if spread > 0 else 1.0
    d = points - c
    return np.einsum("ij,ij->i", points, points) - s * np.einsum("ij,ij->i", d, d)


def solve_dual(points, domain: Domain, mass_tol: float | None = None,
               warm_start=None, max_iter: int = 50,
               max_halvings: int = 30) -> TransportResult:
    """Damped Newton on the concave dual (weights f, one per point).

    Steps are halved until no cell is empty and the sup-norm of the mass
    error drops by a factor 1 - alpha/2.
    """
    points = np.ascontiguousarray(points, dtype=float)
    N = len(points)
    if mass_tol is None:
        mass_tol = 1e-7 / N
    if N > 1 and len(coincident_pairs(points)):
        raise TransportError("points must be pairwise distinct")
    f = np.zeros(N) if warm_start is None else np.array(warm_start, dtype=float)
    state = _evaluate(points, f, domain)
    if state[1].min() < 1e-3 / N:
        # Newton from a nearly empty cell is badly conditioned; restart if better
        f2 = _feasible_start(points, domain)
        state2 = _evaluate(points, f2, domain)
        if state2[1].min() > state[1].min():
            f, state = f2, state2
    diag, masses, cost, dual = state
    if masses.min() <= 0:
        raise TransportError("could not find weights with nonempty cells")
    eps0 = 0.5 * min(masses.min(), 1.0 / N)
    err = masses - 1.0 / N
    res = float(np.abs(err).max())
    history = [dual]
    it = 0
    while res > mass_tol:
        if it >= max_iter:
            raise TransportError(f"Newton did not converge in {max_iter} steps "
                                 f"(residual {res:.3e})", res)
        J = _mass_jacobian(points, diag, domain.total_area)
        delta = np.zeros(N)
        delta[1:] = spsolve(J, -err[1:])
        alpha = 1.0
        for _ in range(max_halvings + 1):
            f_new = f + alpha * delta
            d_new, m_new, c_new, du_new = _evaluate(points, f_new, domain)
            r_new = float(np.abs(m_new - 1.0 / N).max())
            if m_new.min() > eps0 and r_new <= (1 - alpha / 2) * res:
                break
            alpha /= 2
        else:
            raise TransportError(f"damped Newton step failed (residual {res:.3e})", res)
        f, diag, masses, cost, dual, res = f_new, d_new, m_new, c_new, du_new, r_new
        err = masses - 1.0 / N
        history.append(dual)
        it += 1
    shift = f.mean()
    f = f - shift
    dual -= shift * (1 - masses.sum())
    return TransportResult(cost, f, diag, masses, diag.barycenters(), dual, it, res, history)


def dist2_S(m: DiscreteMap | np.ndarray, domain: Domain, **kw) -> float:
    """Squared L2 distance from m to measure-preserving maps, W2^2(m#Leb, Leb)."""
    values = m.values if isinstance(m, DiscreteMap) else np.asarray(m, dtype=float)
    return solve_dual(values, domain, **kw).cost


def check_off_diagonal(values: np.ndarray):
    pairs = coincident_pairs(values)
    if len(pairs):
        j, k = pairs[0]
        raise DiagonalError(f"map values {j} and {k} coincide within {COINCIDENCE_TOL}; "
                            "jitter the map before differentiating")


def grad_from_result(values: np.ndarray, result: TransportResult) -> np.ndarray:
    """Coordinate gradient (2/N)(x_j - barycenter of cell j)."""
    N = len(values)
    return (2.0 / N) * (values - result.cell_barycenters)


def grad_dist2_S(m: DiscreteMap | np.ndarray, domain: Domain, **kw) -> np.ndarray:
    """Gradient of dist2_S with respect to the N value coordinates.

    The function-space gradient 2(x_j - bary_j) times the cell mass 1/N.
    """
    values = m.values if isinstance(m, DiscreteMap) else np.asarray(m, dtype=float)
    check_off_diagonal(values)
    return grad_from_result(values, solve_dual(values, domain, **kw))
