import numpy as np
import pytest
from scipy.stats import chisquare

from genflow.domain import build_partition, sample_map, unit_disk, unit_square
from genflow.energy import kinetic
from genflow.flows import (FlowExitError, beltrami_flow, brenier_disk_sampler, classical_threshold,
                           get_flow, integrate_map, integrate_paths, rotation_flow, rotation_map)


def test_rotation_map_special_angles():
    x = np.random.default_rng(0).normal(size=(10, 2))
    assert np.allclose(rotation_map(0)(x), x)
    assert np.allclose(rotation_map(np.pi)(x), -x, atol=1e-15)


def test_pressure_eigenvalues():
    assert rotation_flow().pressure_hessian_max_eig == 1.0
    assert beltrami_flow().pressure_hessian_max_eig == pytest.approx(np.pi ** 2)


def test_pressure_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, (50, 2))
    h = 1e-6
    for f in (rotation_flow(), beltrami_flow()):
        fd = np.stack([(f.pressure(x + h * e) - f.pressure(x - h * e)) / (2 * h)
                       for e in np.eye(2)], -1)
        assert np.allclose(f.pressure_grad(x), fd, atol=1e-8)


def test_beltrami_values():
    v = beltrami_flow().velocity
    assert np.allclose(v(np.zeros(2)), 0)
    assert np.allclose(v(np.array([0.25, 0.25])), [-0.5, 0.5])


def test_tangent_to_boundary():
    s = np.linspace(0, 1, 1000, endpoint=False)
    th = 2 * np.pi * s
    circ = np.column_stack([np.cos(th), np.sin(th)])
    assert np.abs(np.sum(rotation_flow().velocity(circ) * circ, 1)).max() <= 1e-9
    u = s - 0.5
    v = beltrami_flow().velocity
    for side, n in (((0.5, None), [1, 0]), ((-0.5, None), [-1, 0]),
                    ((None, 0.5), [0, 1]), ((None, -0.5), [0, -1])):
        pts = np.column_stack([np.full_like(u, side[0]) if side[0] is not None else u,
                               np.full_like(u, side[1]) if side[1] is not None else u])
        assert np.abs(v(pts) @ np.array(n, float)).max() <= 1e-9


def test_rk4_rotation_matches_exact():
    p = build_partition(unit_disk(), 256)
    x = p.barycenters
    s = integrate_map(rotation_flow(), np.pi / 2)
    assert np.abs(s(x) - rotation_map(np.pi / 2)(x)).max() <= 1e-10


def test_time_zero_is_identity():
    x = np.random.default_rng(2).uniform(-0.5, 0.5, (20, 2))
    for f in (rotation_flow(), beltrami_flow()):
        assert np.array_equal(integrate_map(f, 0.0)(x), x)


def _jacobian_dets(s, x, h=1e-5):
    cols = [(s(x + h * e) - s(x - h * e)) / (2 * h) for e in np.eye(2)]
    J = np.stack(cols, -1)
    return np.linalg.det(J)


@pytest.mark.parametrize("t", [0.9, 1.5])
def test_beltrami_preserves_volume(t):
    x = np.random.default_rng(3).uniform(-0.45, 0.45, (500, 2))
    dets = _jacobian_dets(integrate_map(beltrami_flow(), t, 1024), x)
    assert np.abs(dets - 1).max() <= 1e-3


def test_exit_detection():
    from genflow.flows import AnalyticFlow
    out = AnalyticFlow("push", lambda x: np.ones_like(x), lambda x: 0 * x[..., 0],
                       lambda x: 0 * x, 0.0, "unit_square")
    with pytest.raises(FlowExitError):
        integrate_map(out, 1.0, 16)(np.zeros((1, 2)))


def test_integrate_paths_endpoints():
    x = np.random.default_rng(4).uniform(-0.4, 0.4, (10, 2))
    P = integrate_paths(rotation_flow(), x, 1.0, 8)
    assert P.shape == (9, 10, 2)
    assert np.allclose(P[-1], rotation_map(1.0)(x), atol=1e-10)


def test_thresholds():
    assert classical_threshold(rotation_flow(), np.pi / 2)
    assert not classical_threshold(rotation_flow(), np.pi)
    assert classical_threshold(beltrami_flow(), 0.9)
    assert not classical_threshold(beltrami_flow(), 1.1)
    with pytest.raises(ValueError):
        get_flow("taylor_green")


@pytest.mark.parametrize("theta", [np.pi / 2, np.pi])
def test_discrete_classical_action(theta):
    # kinetic term of the sampled rotation chain approaches theta^2 / 2
    N, T = 1024, 16
    p = build_partition(unit_disk(), N)
    m = np.stack([sample_map(rotation_map(theta * i / T), p).values for i in range(T + 1)])
    exact = theta ** 2 / 2
    chord = (2 * T * np.sin(theta / (2 * T))) ** 2 / theta ** 2  # chord vs arc, O(1/T^2)
    assert kinetic(m) == pytest.approx(exact * chord, rel=5 / N)
    assert kinetic(m) == pytest.approx(exact, rel=theta ** 2 / (12 * T * T) + 5 / N)


def test_brenier_endpoints_and_bounds():
    b = brenier_disk_sampler(1000, seed=0)
    assert np.abs(b.path(1.0) + b.path(0.0)).max() <= 1e-12
    assert np.array_equal(b.path(0.0), b.x)
    t = np.linspace(0, 1, 33)
    assert np.linalg.norm(b.path(t), axis=-1).max() <= 1 + 1e-12
    assert b.nodes(16).shape == (17, 1000, 2)


def test_brenier_mean_action():
    b = brenier_disk_sampler(100_000, seed=1)
    # exact action of each path by dense midpoint quadrature of |d/dt path|^2
    t = (np.arange(256) + 0.5) / 256
    c, s = np.cos(np.pi * t), np.sin(np.pi * t)
    vel = np.pi * (-s[:, None, None] * b.x + c[:, None, None] * b.v)
    act = (vel ** 2).sum(-1).mean(0)
    se = act.std() / np.sqrt(len(act))
    # |x|^2 + |v|^2 = 1 makes every single action pi^2/2, so se is ~0
    assert abs(act.mean() - np.pi ** 2 / 2) <= max(4 * se, 1e-9)


@pytest.mark.parametrize("t", [0.0, 0.3, 0.5, 0.85])
def test_brenier_marginals_uniform(t):
    b = brenier_disk_sampler(100_000, seed=2)
    y = b.path(t)
    # 100 equal-area bins: 10 radial shells x 10 angular sectors
    r2 = np.minimum((y ** 2).sum(1), 1 - 1e-15)
    ang = (np.arctan2(y[:, 1], y[:, 0]) + np.pi) / (2 * np.pi)
    bins = np.floor(r2 * 10).astype(int) * 10 + np.minimum(np.floor(ang * 10).astype(int), 9)
    counts = np.bincount(bins, minlength=100)
    assert chisquare(counts).pvalue > 0.01


def test_rk4_square_cells_keep_area():
    # cell-area distortion through the flow map, via corner-polygon areas
    p = build_partition(unit_square(), 64)
    s = integrate_map(beltrami_flow(), 1.5)
    from genflow.geom2d import signed_area
    for reg in p.regions[::7]:
        dense = np.concatenate([reg[i] + np.linspace(0, 1, 400, endpoint=False)[:, None]
                                * (reg[(i + 1) % 4] - reg[i]) for i in range(4)])
        assert signed_area(s(dense)) == pytest.approx(1 / 64, rel=1e-3)
