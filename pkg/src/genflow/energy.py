"""Penalized discrete action of a chain of piecewise-constant maps, and its gradient.

All squared norms are L2(Leb) norms of piecewise-constant maps, i.e.
(1/N) sum_j |value_j|^2.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import DiscreteMap, Domain
from .sdot import check_off_diagonal, grad_from_result, solve_dual


@dataclass
class Chain:
    """T+1 maps over one partition, stored as an array of shape (T+1, N, 2)."""

    maps: np.ndarray
    partition_ref: str = ""

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=float)
        if self.maps.ndim != 3 or self.maps.shape[2] != 2 or len(self.maps) < 2:
            raise ValueError("chain maps must have shape (T+1, N, 2) with T >= 1")

    @property
    def T(self) -> int:
        return len(self.maps) - 1

    @property
    def N(self) -> int:
        return self.maps.shape[1]

    def __getitem__(self, i) -> DiscreteMap:
        return DiscreteMap(self.maps[i], self.partition_ref)

    @classmethod
    def from_maps(cls, maps) -> "Chain":
        refs = {m.partition_ref for m in maps}
        if len(refs) > 1 or len({m.N for m in maps}) > 1:
            raise ValueError("all maps of a chain must share one partition")
        return cls(np.stack([m.values for m in maps]), refs.pop())


@dataclass
class EnergyBreakdown:
    kinetic: float
    boundary0: float
    boundary1: float
    incompressibility: list
    lam: float
    T: int
    total: float = field(init=False)
    e_prime: float = field(init=False)

    def __post_init__(self):
        pen = self.boundary0 + self.boundary1 + float(np.sum(self.incompressibility))
        self.total = self.kinetic + self.lam * pen
        self.e_prime = (1 + 4 * self.T / self.lam) * self.total if self.lam > 0 else float("inf")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["incompressibility"] = [float(x) for x in self.incompressibility]
        return d


def sqnorm(a: np.ndarray) -> float:
    """L2(Leb) squared norm of a piecewise-constant map (or a stack of them)."""
    return float(np.sum(a * a) / a.shape[-2])


def kinetic(maps: np.ndarray) -> float:
    T = len(maps) - 1
    return T * sqnorm(np.diff(maps, axis=0))


def _as_values(m):
    return m.values if isinstance(m, DiscreteMap) else np.asarray(m, dtype=float)


def _check(chain: Chain, s_star, s_end):
    for s in (s_star, s_end):
        if isinstance(s, DiscreteMap) and chain.partition_ref and s.partition_ref \
                and s.partition_ref != chain.partition_ref:
            raise ValueError(f"boundary map on {s.partition_ref}, chain on {chain.partition_ref}")
        if _as_values(s).shape != chain.maps.shape[1:]:
            raise ValueError("boundary map and chain have different N")


def evaluate(chain: Chain, lam: float, s_star, s_end, domain: Domain,
             gradient: bool = True, warm=None, mass_tol=None):
    """Energy breakdown, coordinate gradient (or None) and the dual weights.

    ``warm`` is an optional list (length T+1) of dual weights per time index
    used to warm-start the transport solves; the returned list has the same
    layout.
    """
    _check(chain, s_star, s_end)
    if lam < 0:
        raise ValueError("penalization must be nonnegative")
    m = chain.maps
    T, N = chain.T, chain.N
    a, b = _as_values(s_star), _as_values(s_end)
    incomp = []
    weights = [None] * (T + 1)
    grad = np.zeros_like(m) if gradient else None
    for i in range(1, T):
        if gradient:
            check_off_diagonal(m[i])
        ws = warm[i] if warm is not None else None
        res = solve_dual(m[i], domain, mass_tol=mass_tol, warm_start=ws)
        incomp.append(res.cost)
        weights[i] = res.weights
        if gradient:
            grad[i] += lam * grad_from_result(m[i], res)
    br = EnergyBreakdown(kinetic(m), sqnorm(m[0] - a), sqnorm(m[T] - b), incomp, lam, T)
    if gradient:
        d = np.diff(m, axis=0)
        c = 2.0 * T / N
        grad[:-1] -= c * d
        grad[1:] += c * d
        grad[0] += lam * (2.0 / N) * (m[0] - a)
        grad[T] += lam * (2.0 / N) * (m[T] - b)
    return br, grad, weights


def energy(chain: Chain, lam: float, s_star, s_end, domain: Domain) -> EnergyBreakdown:
    return evaluate(chain, lam, s_star, s_end, domain, gradient=False)[0]


def energy_grad(chain: Chain, lam: float, s_star, s_end, domain: Domain) -> np.ndarray:
    """Gradient with respect to every coordinate, shape (T+1, N, 2)."""
    return evaluate(chain, lam, s_star, s_end, domain)[1]
