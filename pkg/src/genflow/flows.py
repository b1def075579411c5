"""Stationary Euler flows used as test cases, and Brenier's generalized disk solution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

FLOWS = ("disk_rotation", "square_beltrami")


@dataclass(frozen=True)
class AnalyticFlow:
    name: str
    velocity: Callable
    pressure: Callable
    pressure_grad: Callable
    pressure_hessian_max_eig: float
    domain_shape: str


def _rot_velocity(x):
    x = np.asarray(x, dtype=float)
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


def rotation_flow() -> AnalyticFlow:
    """Rigid rotation of the unit disk, p = |x|^2 / 2."""
    return AnalyticFlow(
        "disk_rotation",
        _rot_velocity,
        lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1),
        lambda x: np.asarray(x, dtype=float),
        1.0,
        "unit_disk",
    )


def rotation_map(theta: float):
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return lambda x: np.asarray(x, dtype=float) @ R.T


def _bel_velocity(x):
    x = np.asarray(x, dtype=float)
    a, b = np.pi * x[..., 0], np.pi * x[..., 1]
    return np.stack([-np.cos(a) * np.sin(b), np.sin(a) * np.cos(b)], axis=-1)


def _bel_pressure(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (np.sin(np.pi * x[..., 0]) ** 2 + np.sin(np.pi * x[..., 1]) ** 2)


def _bel_pressure_grad(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.pi * np.sin(2 * np.pi * x)


def beltrami_flow() -> AnalyticFlow:
    """Cellular Beltrami flow on [-1/2, 1/2]^2."""
    return AnalyticFlow("square_beltrami", _bel_velocity, _bel_pressure,
                        _bel_pressure_grad, np.pi ** 2, "unit_square")


def get_flow(name: str) -> AnalyticFlow:
    if name == "disk_rotation":
        return rotation_flow()
    if name == "square_beltrami":
        return beltrami_flow()
    raise ValueError(f"unknown flow {name!r}; expected one of {FLOWS}")


class FlowExitError(RuntimeError):
    pass


def _outside(flow: AnalyticFlow, x):
    if flow.domain_shape == "unit_disk":
        return np.linalg.norm(x, axis=-1) - 1.0
    return np.max(np.abs(x), axis=-1) - 0.5


def integrate_map(flow: AnalyticFlow, t_max: float, steps: int = 1024):
    """Time-t_max map of the flow by classical RK4 with ``steps`` steps."""
    if steps < 1:
        raise ValueError("steps must be positive")
    h = t_max / steps
    v = flow.velocity

    def s(x0):
        x = np.array(x0, dtype=float)
        if t_max == 0:
            return x
        base = np.maximum(_outside(flow, x), 0.0)
        for _ in range(steps):
            k1 = v(x)
            k2 = v(x + 0.5 * h * k1)
            k3 = v(x + 0.5 * h * k2)
            k4 = v(x + h * k3)
            x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        excess = _outside(flow, x) - base
        if np.any(excess > 1e-6):
            raise FlowExitError(f"trajectory left the domain by {excess.max():.2e}")
        return x

    return s


def integrate_paths(flow: AnalyticFlow, x0, t_max: float, T: int, steps: int = 1024):
    """Classical trajectories sampled at times i t_max / T, shape (T+1, n, 2)."""
    per = max(1, steps // T)
    out = [np.asarray(x0, dtype=float)]
    step = integrate_map(flow, t_max / T, per)
    for _ in range(T):
        out.append(step(out[-1]))
    return np.stack(out)


def classical_threshold(flow: AnalyticFlow, t_max: float) -> bool:
    """Strict pressure-Hessian bound below which the classical flow is minimizing."""
    return bool(flow.pressure_hessian_max_eig * t_max ** 2 < np.pi ** 2)


@dataclass(frozen=True)
class BrenierDiskSample:
    """Paths x cos(pi t) + v sin(pi t), stored as arrays of shape (n, 2)."""

    x: np.ndarray
    v: np.ndarray

    def path(self, t):
        t = np.asarray(t, dtype=float)
        c, s = np.cos(np.pi * t), np.sin(np.pi * t)
        return c[..., None, None] * self.x + s[..., None, None] * self.v

    def nodes(self, T: int) -> np.ndarray:
        """Path values at i/T, shape (T+1, n, 2)."""
        return self.path(np.arange(T + 1) / T)

    def __len__(self):
        return len(self.x)


def brenier_disk_sampler(n: int, seed=None) -> BrenierDiskSample:
    """Sample Brenier's generalized solution of the disk inversion.

    x is uniform on the unit disk and v uniform on the circle of radius
    sqrt(1 - |x|^2).
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(size=n))
    a = rng.uniform(0, 2 * np.pi, size=n)
    x = np.column_stack([r * np.cos(a), r * np.sin(a)])
    b = rng.uniform(0, 2 * np.pi, size=n)
    rv = np.sqrt(np.clip(1 - r * r, 0, None))
    v = np.column_stack([rv * np.cos(b), rv * np.sin(b)])
    return BrenierDiskSample(x, v)
