"""Limited-memory quasi-Newton minimization of the discrete action.

Levels are solved with T = T0, 2 T0, 4 T0, ... segments; each level starts
from the midpoint refinement of the previous minimizer.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import DiscreteMap, Domain
from .energy import Chain, EnergyBreakdown, evaluate, kinetic
from .sdot import COINCIDENCE_TOL, DiagonalError, TransportError, coincident_pairs

log = logging.getLogger(__name__)


@dataclass
class SolveConfig:
    N: int
    T_final: int
    lam_exponent: float = 3.0
    max_outer_iter: int = 500
    grad_tol: float = 1e-6
    jitter_scale: float | None = None
    seed: int = 0
    T0: int = 1
    memory: int = 10
    armijo: float = 1e-4
    max_halvings: int = 30
    mass_tol: float | None = None

    def __post_init__(self):
        if self.lam_exponent <= 2:
            raise ValueError("lam_exponent must exceed the space dimension 2")
        T = self.T0
        while T < self.T_final:
            T *= 2
        if T != self.T_final:
            raise ValueError(f"T_final={self.T_final} is not T0={self.T0} times a power of 2")

    @property
    def lam(self) -> float:
        return float(self.N) ** (1.0 / self.lam_exponent)


@dataclass
class LevelInfo:
    T: int
    iterations: int
    evaluations: int
    converged: bool
    grad_norm: float
    message: str
    wall_time_s: float


@dataclass
class SolveState:
    chain: Chain
    energy_log: list = field(default_factory=list)
    level: int = 0
    levels: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    lam: float = 1.0
    grad: np.ndarray | None = None

    @property
    def energy(self) -> EnergyBreakdown:
        return self.energy_log[-1]

    @property
    def converged(self) -> bool:
        return bool(self.levels) and self.levels[-1].converged


# ---------------------------------------------------------------------------
# chain construction


def jitter(values: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    return values + rng.uniform(-scale, scale, size=values.shape)


def _leave_diagonal(values, scale, rng, max_tries=20):
    """Jitter until no two values are within the coincidence threshold."""
    out = values
    for _ in range(max_tries):
        if not len(coincident_pairs(out)):
            return out
        out = jitter(values, scale, rng)
        scale *= 2
    raise DiagonalError("could not separate coincident map values by jitter")


def initialize(s_star, s_end, T0: int, jitter_scale: float = 1e-6,
               rng: np.random.Generator | None = None) -> Chain:
    """Linear interpolation between the boundary maps, interior maps jittered."""
    if T0 < 1:
        raise ValueError("T0 must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    a = s_star.values if isinstance(s_star, DiscreteMap) else np.asarray(s_star, float)
    b = s_end.values if isinstance(s_end, DiscreteMap) else np.asarray(s_end, float)
    t = np.arange(T0 + 1)[:, None, None] / T0
    maps = (1 - t) * a[None] + t * b[None]
    for i in range(1, T0):
        maps[i] = _leave_diagonal(jitter(maps[i], jitter_scale, rng), jitter_scale, rng)
    ref = getattr(s_star, "partition_ref", "")
    return Chain(maps, ref)


def refine(chain: Chain, jitter_scale: float = 1e-6,
           rng: np.random.Generator | None = None) -> Chain:
    """Insert midpoints, T -> 2T.  New maps are jittered only if on the diagonal."""
    rng = np.random.default_rng(0) if rng is None else rng
    m = chain.maps
    T = chain.T
    out = np.empty((2 * T + 1,) + m.shape[1:])
    out[0::2] = m
    out[1::2] = 0.5 * (m[:-1] + m[1:])
    for i in range(1, 2 * T, 2):
        out[i] = _leave_diagonal(out[i], jitter_scale, rng)
    return Chain(out, chain.partition_ref)


def _refine_weights(weights):
    out = []
    for a, b in zip(weights[:-1], weights[1:]):
        out.append(a)
        out.append(0.5 * (a + b) if a is not None and b is not None else (a if b is None else b))
    out.append(weights[-1])
    return out


# ---------------------------------------------------------------------------
# L-BFGS


class _Objective:
    def __init__(self, shape, lam, s_star, s_end, domain, ref, mass_tol):
        self.shape = shape
        self.lam = lam
        self.s_star = s_star
        self.s_end = s_end
        self.domain = domain
        self.ref = ref
        self.mass_tol = mass_tol
        self.evaluations = 0

    def __call__(self, x, warm):
        self.evaluations += 1
        chain = Chain(x.reshape(self.shape), self.ref)
        br, g, w = evaluate(chain, self.lam, self.s_star, self.s_end, self.domain,
                            warm=warm, mass_tol=self.mass_tol)
        return br, g.ravel(), w


def lbfgs_level(state: SolveState, objective: _Objective, config: SolveConfig) -> LevelInfo:
    """Run L-BFGS with Armijo backtracking (halving) from the state's chain."""
    t_start = time.perf_counter()
    x = state.chain.maps.ravel().copy()
    warm = state.weights or None
    br, g, warm = objective(x, warm)
    state.energy_log.append(br)
    f = br.total
    S, Y = deque(maxlen=config.memory), deque(maxlen=config.memory)
    N = state.chain.N
    step_scale = 0.1 * objective.domain.diameter / np.sqrt(N)
    message, converged, it = "max_outer_iter reached", False, 0
    for it in range(config.max_outer_iter + 1):
        gnorm = float(np.abs(g).max())
        if gnorm <= config.grad_tol:
            message, converged = "grad_tol reached", True
            break
        if it == config.max_outer_iter:
            break
        d = _two_loop(g, S, Y)
        if g @ d >= 0:
            S.clear()
            Y.clear()
            d = -g
        alpha = 1.0
        if not S:
            alpha = min(1.0, step_scale / float(np.abs(d).max()))
        slope = float(g @ d)
        accepted = False
        for _ in range(config.max_halvings + 1):
            x_new = x + alpha * d
            try:
                br_new, g_new, w_new = objective(x_new, warm)
            except (TransportError, DiagonalError):
                alpha /= 2
                continue
            if br_new.total <= f + config.armijo * alpha * slope:
                accepted = True
                break
            alpha /= 2
        if not accepted:
            message = "line search failed"
            log.warning("T=%d: line search failed at iteration %d (|g|=%.3e)",
                        state.chain.T, it, gnorm)
            break
        s, y = x_new - x, g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, g, f, warm = x_new, g_new, br_new.total, w_new
        state.energy_log.append(br_new)
    state.chain = Chain(x.reshape(state.chain.maps.shape), state.chain.partition_ref)
    state.weights = warm
    state.grad = g.reshape(state.chain.maps.shape)
    return LevelInfo(state.chain.T, it, objective.evaluations, converged,
                     float(np.abs(g).max()), message, time.perf_counter() - t_start)


def _two_loop(g, S, Y):
    q = -g.copy()
    if not S:
        return q
    rho = [1.0 / (y @ s) for s, y in zip(S, Y)]
    alpha = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * (s @ q)
        alpha.append(a)
        q -= a * y
    s, y = S[-1], Y[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alpha)):
        b = r * (y @ q)
        q += (a - b) * s
    return q


# ---------------------------------------------------------------------------


def minimize(config: SolveConfig, s_star, s_end, domain: Domain,
             checkpoint=None, callback=None) -> SolveState:
    """Time-refined penalized minimization from s_star to s_end.

    ``checkpoint`` is an optional path written after each level;
    ``callback(state, info)`` is called after each level.
    """
    rng = np.random.default_rng(config.seed)
    scale = config.jitter_scale if config.jitter_scale is not None else 1e-6 * domain.diameter
    lam = config.lam
    chain = initialize(s_star, s_end, config.T0, scale, rng)
    state = SolveState(chain, lam=lam, weights=[None] * (chain.T + 1))
    while True:
        obj = _Objective(chain.maps.shape, lam, s_star, s_end, domain,
                         chain.partition_ref, config.mass_tol)
        info = lbfgs_level(state, obj, config)
        state.levels.append(info)
        log.info("T=%d: %s after %d iterations, E=%.8g, |g|=%.2e",
                 info.T, info.message, info.iterations, state.energy.total, info.grad_norm)
        if checkpoint is not None:
            save_checkpoint(checkpoint, state, rng)
        if callback is not None:
            callback(state, info)
        if state.chain.T >= config.T_final:
            break
        chain = refine(state.chain, scale, rng)
        state.chain = chain
        state.weights = _refine_weights(state.weights)
        state.level += 1
    return state


def stationarity_residual(chain: Chain, lam: float, grad: np.ndarray) -> np.ndarray:
    """Sup-norm per interior time of T^2 (m_{i-1} - 2 m_i + m_{i+1}) - T lam (m_i - bary_i).

    ``grad`` is the coordinate gradient of the energy; at interior times it
    is -(2/(N T)) times the residual, so the residual is read off from it.
    """
    T, N = chain.T, chain.N
    return np.abs(grad[1:-1] * (-N * T / 2.0)).reshape(T - 1, -1).max(axis=1)


def save_checkpoint(path, state: SolveState, rng: np.random.Generator):
    data = {
        "level": state.level,
        "T": state.chain.T,
        "lam": state.lam,
        "partition_ref": state.chain.partition_ref,
        "chain": state.chain.maps.tolist(),
        "weights": [None if w is None else np.asarray(w).tolist() for w in state.weights],
        "rng_state": rng.bit_generator.state,
        "levels": [asdict(l) for l in state.levels],
    }
    with open(path, "w") as fh:
        json.dump(data, fh)


def load_checkpoint(path):
    """Return (SolveState, numpy Generator) from a checkpoint file."""
    with open(path) as fh:
        data = json.load(fh)
    chain = Chain(np.array(data["chain"]), data["partition_ref"])
    state = SolveState(chain, level=data["level"], lam=data["lam"],
                       weights=[None if w is None else np.array(w) for w in data["weights"]],
                       levels=[LevelInfo(**l) for l in data["levels"]])
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng_state"]
    return state, rng
