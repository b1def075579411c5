"""Generalized flows built from chains, and the geometric analyses run on them.

Paths are piecewise linear with nodes at times i/T.  The H1 norm
|int w|^2 + int |w'|^2 is a quadratic form in the nodes, and

    phi(w) = (trapezoid mean of w, sqrt(T) (w_{i+1} - w_i)_i)

is a linear isometry into R^(2T+2).  Clustering and farthest point sampling
work on these embedded vectors.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import Domain
from .energy import Chain
from .sdot import TransportError, coincident_pairs, solve_dual

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    nodes: np.ndarray
    weight: float

    @property
    def T(self) -> int:
        return len(self.nodes) - 1

    def __call__(self, t):
        """Piecewise-linear interpolation at times t in [0, 1]."""
        t = np.asarray(t, dtype=float)
        s = np.clip(t, 0, 1) * self.T
        i = np.minimum(np.floor(s).astype(int), self.T - 1)
        a = (s - i)[..., None]
        return (1 - a) * self.nodes[i] + a * self.nodes[i + 1]


@dataclass
class GeneralizedFlow:
    """N equally weighted piecewise-linear paths; ``nodes`` has shape (N, T+1, 2)."""

    nodes: np.ndarray

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def T(self) -> int:
        return self.nodes.shape[1] - 1

    @property
    def trajectories(self) -> list:
        return [Trajectory(p, 1.0 / self.N) for p in self.nodes]

    def at(self, t: float) -> np.ndarray:
        """Point cloud e_t # mu, shape (N, 2)."""
        s = min(max(t, 0.0), 1.0) * self.T
        i = min(int(np.floor(s)), self.T - 1)
        a = s - i
        return (1 - a) * self.nodes[:, i] + a * self.nodes[:, i + 1]

    def subset(self, idx) -> "GeneralizedFlow":
        return GeneralizedFlow(self.nodes[np.asarray(idx)])


def extract_flow(chain: Chain) -> GeneralizedFlow:
    return GeneralizedFlow(np.transpose(chain.maps, (1, 0, 2)).copy())


# ---------------------------------------------------------------------------
# H1 geometry


def _nodes(p):
    return p.nodes if isinstance(p, Trajectory) else np.asarray(p, dtype=float)


def h1_inner(a, b) -> float:
    """Exact H1 inner product of two piecewise-linear paths with equal T."""
    a, b = _nodes(a), _nodes(b)
    if a.shape != b.shape:
        raise ValueError("paths must have the same number of nodes")
    T = len(a) - 1
    ma = (a[:-1] + a[1:]).sum(axis=0) / (2 * T)
    mb = (b[:-1] + b[1:]).sum(axis=0) / (2 * T)
    return float(ma @ mb + T * np.sum(np.diff(a, axis=0) * np.diff(b, axis=0)))


def h1_embed(nodes: np.ndarray) -> np.ndarray:
    """Isometric embedding of paths (..., T+1, 2) into R^(2T+2)."""
    T = nodes.shape[-2] - 1
    mean = (nodes[..., :-1, :] + nodes[..., 1:, :]).sum(axis=-2) / (2 * T)
    vel = np.sqrt(T) * np.diff(nodes, axis=-2)
    return np.concatenate([mean, vel.reshape(vel.shape[:-2] + (-1,))], axis=-1)


def _sqdist(X, C):
    d = (X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray       # node paths, shape (k, T+1, 2)
    energy: float
    energy_history: list
    iterations: int
    reseeded: list


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = _sqdist(X, X[centers])[:, 0]
    for _ in range(1, k):
        tot = d2.sum()
        if tot <= 0:
            j = int(np.flatnonzero(~np.isin(np.arange(n), centers))[0])
        else:
            j = int(rng.choice(n, p=d2 / tot))
        centers.append(j)
        d2 = np.minimum(d2, _sqdist(X, X[[j]])[:, 0])
    return centers


def kmeans(flow: GeneralizedFlow, k: int, seed=0, max_iter: int = 100) -> KMeansResult:
    """Lloyd iteration in the H1 metric with k-means++ seeding.

    Centroids are nodewise means; ties go to the lowest centroid index.
    """
    N = flow.N
    if not 1 <= k <= N:
        raise ValueError(f"k={k} must lie in [1, {N}]")
    rng = np.random.default_rng(seed)
    X = h1_embed(flow.nodes)
    nodes = flow.nodes
    cent = nodes[_kmeanspp(X, k, rng)].copy()
    labels = None
    history, reseeded = [], []
    it = 0
    for it in range(1, max_iter + 1):
        D = _sqdist(X, h1_embed(cent))
        new = np.argmin(D, axis=1)
        history.append(float(D[np.arange(N), new].mean()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                cent[c] = nodes[members].mean(axis=0)
            else:
                far = int(np.argmax(D[np.arange(N), labels]))
                cent[c] = nodes[far]
                reseeded.append((it, c, far))
    D = _sqdist(X, h1_embed(cent))
    energy = float(D[np.arange(N), labels].mean())
    return KMeansResult(labels, cent, energy, history, it, reseeded)


# ---------------------------------------------------------------------------
# farthest point sampling and box dimension


def farthest_point_sampling(flow, start_index: int = 0):
    """Greedy ordering of the paths and covering radii eps_i of each prefix.

    Accepts a GeneralizedFlow or an (N, D) array of embedded points.
    """
    X = h1_embed(flow.nodes) if isinstance(flow, GeneralizedFlow) else np.asarray(flow, float)
    N = len(X)
    order = np.empty(N, dtype=int)
    eps = np.empty(N)
    chosen = np.zeros(N, dtype=bool)
    d = np.full(N, np.inf)
    j = start_index
    for i in range(N):
        order[i] = j
        chosen[j] = True
        d = np.minimum(d, np.sqrt(np.sum((X - X[j]) ** 2, axis=1)))
        eps[i] = d.max()
        if i + 1 < N:
            cand = np.where(chosen, -1.0, d)
            j = int(np.argmax(cand))
    return order, eps


@dataclass
class DimensionFit:
    dimension: float
    intercept: float
    i_lo: int
    i_hi: int
    n_points: int
    bracket_lo: tuple
    bracket_hi: tuple
    truncated: bool


def box_dimension(eps, fit_lo_frac: float = 0.2, fit_hi_frac: float = 0.8) -> DimensionFit:
    """Slope of log i against log(1/eps_i) over N^lo <= i <= N^hi.

    Also returns the covering-radius bracket on log i / log(1/r_i) at the
    two ends of the fit range.
    """
    eps = np.asarray(eps, dtype=float)
    N = len(eps)
    i_lo = max(1, int(np.ceil(N ** fit_lo_frac)))
    i_hi = min(N, int(np.floor(N ** fit_hi_frac)))
    i = np.arange(i_lo, i_hi + 1)
    e = eps[i - 1]
    truncated = False
    if np.any(e <= 0):
        truncated = True
        keep = np.flatnonzero(e > 0)
        if len(keep) < 2:
            raise ValueError("not enough positive covering radii in the fit range")
        i_hi = int(i[keep[-1]])
        i, e = i[: keep[-1] + 1], e[: keep[-1] + 1]
        warnings.warn(f"eps vanishes inside the fit range; truncated at i={i_hi}")
    slope, intercept = np.polyfit(np.log(1 / e), np.log(i), 1)

    def bracket(k):
        L = np.log(1 / eps[k - 1])
        r = np.log(k) / L
        return ((1 - np.log(2) / L) * r, r)

    return DimensionFit(float(slope), float(intercept), int(i[0]), int(i[-1]), len(i),
                        bracket(int(i[0])), bracket(int(i[-1])), truncated)


def covering_radius(X: np.ndarray, i: int) -> float:
    """Smallest r such that i balls centred at data points cover X (brute force)."""
    X = np.asarray(X, dtype=float)
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    best = np.inf
    for centers in itertools.combinations(range(len(X)), i):
        best = min(best, float(D[:, centers].min(axis=1).max()))
    return best


def covering_radius_check(flow, i: int, start_index: int = 0):
    """Brute-force r_i against the FPS radius: returns (eps_i, r_i, holds)."""
    X = h1_embed(flow.nodes) if isinstance(flow, GeneralizedFlow) else np.asarray(flow, float)
    if len(X) > 10:
        raise ValueError("brute-force covering radius is limited to N <= 10")
    _, eps = farthest_point_sampling(X, start_index)
    r = covering_radius(X, i)
    e = eps[i - 1]
    slack = 1e-12 * max(1.0, e)
    return e, r, bool(e / 2 - slack <= r <= e + slack)


# ---------------------------------------------------------------------------
# pressure and incompressibility


@dataclass(frozen=True)
class PressureSample:
    time_index: int
    position: np.ndarray
    grad_p: np.ndarray


@dataclass
class PressureField:
    """Scattered estimates of grad p; arrays of shape (T-1, N, 2)."""

    positions: np.ndarray
    grad_p: np.ndarray

    def __iter__(self):
        for i in range(len(self.positions)):
            for j in range(self.positions.shape[1]):
                yield PressureSample(i + 1, self.positions[i, j], self.grad_p[i, j])

    def __len__(self):
        return self.positions.shape[0] * self.positions.shape[1]


def pressure_field(chain: Chain, lam: float | None = None) -> PressureField:
    """grad p ~ -T^2 (m_{i-1} - 2 m_i + m_{i+1}) at m_i, for interior i.

    ``lam`` is accepted for symmetry with the stationarity identity; the
    estimate itself only uses the second difference.
    """
    m = chain.maps
    T = chain.T
    if T < 2:
        raise ValueError("pressure needs at least one interior time")
    acc = T * T * (m[:-2] - 2 * m[1:-1] + m[2:])
    return PressureField(m[1:-1].copy(), -acc)


@dataclass
class ResidualEstimate:
    value: float
    times: np.ndarray
    costs: np.ndarray
    bound: float | None

    @property
    def ratio(self) -> float | None:
        return None if not self.bound else self.value / self.bound


def incompressibility_residual(flow: GeneralizedFlow, domain: Domain,
                               quadrature_per_interval: int = 3,
                               e_prime: float | None = None,
                               mass_tol: float | None = None) -> ResidualEstimate:
    """Gauss-Legendre estimate of int_0^1 W2^2(e_t # mu, Leb) dt.

    If ``e_prime`` is given the bound E'/(4 T^2) is attached for comparison.
    """
    T = flow.T
    x, w = np.polynomial.legendre.leggauss(quadrature_per_interval)
    x, w = (x + 1) / 2, w / 2
    times, costs, weights = [], [], []
    warm = None
    for i in range(T):
        for a, wq in zip(x, w):
            t = (i + a) / T
            pts = flow.at(t)
            if len(coincident_pairs(pts)):
                pts = pts + np.random.default_rng(i).uniform(-1e-9, 1e-9, pts.shape)
            try:
                res = solve_dual(pts, domain, mass_tol=mass_tol, warm_start=warm)
            except TransportError:
                res = solve_dual(pts, domain, mass_tol=mass_tol)
            warm = res.weights
            times.append(t)
            costs.append(res.cost)
            weights.append(wq / T)
    costs = np.array(costs)
    value = float(np.dot(weights, costs))
    bound = None if e_prime is None else e_prime / (4 * T * T)
    return ResidualEstimate(value, np.array(times), costs, bound)
