"""Shared fixtures: the long solver runs used by the acceptance and example tests.

Runs are computed once per session.  Setting GENFLOW_RUN_CACHE to a directory
stores finished runs there as .npz files and reuses them on later sessions.
"""

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from genflow.domain import build_partition, make_domain, sample_map
from genflow.flows import get_flow, integrate_map
from genflow.optimizer import SolveConfig, minimize

_RUNS = {}
CRITERIA = []


@dataclass
class Run:
    flow: str
    t_max: float
    N: int
    T: int
    maps: np.ndarray
    grad: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    lam: float
    energy: dict
    converged: bool
    wall_time_s: float

    @property
    def domain(self):
        return make_domain(get_flow(self.flow).domain_shape)

    @property
    def partition(self):
        return build_partition(self.domain, self.N)


def _compute(flow, t_max, N, T):
    f = get_flow(flow)
    dom = make_domain(f.domain_shape)
    part = build_partition(dom, N)
    a = sample_map(lambda x: x, part)
    b = sample_map(integrate_map(f, t_max), part)
    t0 = time.perf_counter()
    st = minimize(SolveConfig(N=N, T_final=T), a, b, dom)
    wall = time.perf_counter() - t0
    return Run(flow, t_max, N, T, st.chain.maps, st.grad, a.values, b.values, st.lam,
               st.energy.to_dict(), all(l.converged for l in st.levels), wall)


def get_run(flow, t_max, N, T) -> Run:
    key = (flow, round(t_max, 12), N, T)
    if key in _RUNS:
        return _RUNS[key]
    cache = os.environ.get("GENFLOW_RUN_CACHE")
    path = Path(cache) / f"{flow}_{t_max:.6f}_{N}_{T}.npz" if cache else None
    if path is not None and path.exists():
        d = np.load(path)
        meta = json.loads(str(d["meta"]))
        run = Run(flow, t_max, N, T, d["maps"], d["grad"], d["s0"], d["s1"], **meta)
    else:
        run = _compute(flow, t_max, N, T)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            meta = {"lam": run.lam, "energy": run.energy, "converged": run.converged,
                    "wall_time_s": run.wall_time_s}
            np.savez(path, maps=run.maps, grad=run.grad, s0=run.s0, s1=run.s1,
                     meta=json.dumps(meta))
    _RUNS[key] = run
    return run


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""
    def _report(number, ok, detail):
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA.append((number, line))
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERIA, key=lambda x: x[0]):
        terminalreporter.write_line(line)
