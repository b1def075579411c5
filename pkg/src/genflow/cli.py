"""Command line entry point: ``genflow solve|analyze|render``.

A run directory holds config.json, trajectories.csv (the computed chain),
energy_log.json, levels.json, summary.json and whatever the selected
analyses and figures produce.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (GeneralizedFlow, box_dimension, farthest_point_sampling, incompressibility_residual,
                       kmeans, pressure_field)
from .domain import PartitionError, build_partition, make_domain, sample_map
from .energy import Chain
from .flows import FLOWS, classical_threshold, get_flow, integrate_map
from .optimizer import SolveConfig, minimize
from . import render as rd

log = logging.getLogger("genflow")

THREADS_ENV = "GENFLOW_THREADS"
SUMMARY_KEYS = ("config_echo", "energy_breakdown", "e_prime", "residual", "residual_bound",
                "dimension_estimate", "classical_threshold", "wall_time_s")


class ConfigError(ValueError):
    pass


@dataclass
class ProbeDisk:
    center: tuple
    radius: float


@dataclass
class RunConfig:
    flow: str
    t_max: float
    N: int
    T_final: int
    output_dir: str
    lam_exponent: float = 3.0
    seed: int = 0
    rings: int | None = None
    max_outer_iter: int = 500
    grad_tol: float = 1e-6
    clusters: int | None = None
    dimension: bool = False
    pressure: bool = False
    residual: bool = False
    frames: bool = False
    trajectories: list = field(default_factory=list)

    def __post_init__(self):
        if self.flow not in FLOWS:
            raise ConfigError(f"unknown flow {self.flow!r}; expected one of {FLOWS}")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        if self.clusters is not None and (not isinstance(self.clusters, int) or self.clusters < 1):
            raise ConfigError("analyses.clusters must be a positive integer")
        probes = []
        for p in self.trajectories:
            if isinstance(p, ProbeDisk):
                probes.append(p)
                continue
            try:
                c, r = p["center"], float(p["radius"])
            except (KeyError, TypeError) as exc:
                raise ConfigError("probe disks need 'center' and 'radius'") from exc
            if len(c) != 2 or r <= 0:
                raise ConfigError(f"bad probe disk {p}")
            probes.append(ProbeDisk((float(c[0]), float(c[1])), r))
        self.trajectories = probes

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        an = d.pop("analyses", {}) or {}
        re = d.pop("render", {}) or {}
        known = {"clusters", "dimension", "pressure", "residual"}
        if set(an) - known:
            raise ConfigError(f"unknown analyses flags {sorted(set(an) - known)}")
        if set(re) - {"frames", "trajectories"}:
            raise ConfigError(f"unknown render flags {sorted(set(re) - {'frames', 'trajectories'})}")
        try:
            return cls(**d, **an, **re)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        out = {k: d[k] for k in ("flow", "t_max", "N", "T_final", "lam_exponent", "seed",
                                 "output_dir", "rings", "max_outer_iter", "grad_tol")}
        out["analyses"] = {k: d[k] for k in ("clusters", "dimension", "pressure", "residual")}
        out["render"] = {"frames": self.frames,
                         "trajectories": [{"center": list(p.center), "radius": p.radius}
                                          for p in self.trajectories]}
        return out

    @property
    def domain_shape(self) -> str:
        return get_flow(self.flow).domain_shape


# ---------------------------------------------------------------------------
# file formats


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n")


def write_trajectories(path, flow: GeneralizedFlow):
    T = flow.T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "x", "y"])
        for j in range(flow.N):
            for i in range(T + 1):
                x, y = flow.nodes[j, i]
                w.writerow([j, f"{i / T:.17g}", f"{x:.17g}", f"{y:.17g}"])


def read_trajectories(path) -> GeneralizedFlow:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim == 1:
        data = data[None]
    ids = data[:, 0].astype(int)
    N = ids.max() + 1
    nodes = data[:, 2:4].reshape(N, -1, 2)
    return GeneralizedFlow(nodes)


def write_epsilon_curve(path, eps):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "epsilon", "log_i", "log_inv_eps"])
        for i, e in enumerate(eps, start=1):
            lie = f"{np.log(1 / e):.17g}" if e > 0 else "inf"
            w.writerow([i, f"{e:.17g}", f"{np.log(i):.17g}", lie])


# ---------------------------------------------------------------------------
# pipeline


def _setup(cfg: RunConfig):
    domain = make_domain(cfg.domain_shape)
    part = build_partition(domain, cfg.N, rings=cfg.rings)
    return domain, part


def _load_config(run_dir) -> RunConfig:
    p = Path(run_dir) / "config.json"
    if not p.exists():
        raise FileNotFoundError(f"{p} not found; run 'solve' first")
    return RunConfig.from_dict(json.loads(p.read_text()))


def solve(cfg: RunConfig) -> dict:
    """Build the problem, minimize, write the chain and run the selected analyses."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    domain, part = _setup(cfg)
    flow_def = get_flow(cfg.flow)
    s_star = sample_map(lambda x: x, part)
    s_end = sample_map(integrate_map(flow_def, cfg.t_max), part)
    sc = SolveConfig(N=part.N, T_final=cfg.T_final, lam_exponent=cfg.lam_exponent,
                     max_outer_iter=cfg.max_outer_iter, grad_tol=cfg.grad_tol, seed=cfg.seed)
    state = minimize(sc, s_star, s_end, domain)
    _dump_json(out / "config.json", cfg.to_dict())
    flow = GeneralizedFlow(np.transpose(state.chain.maps, (1, 0, 2)).copy())
    write_trajectories(out / "trajectories.csv", flow)
    _dump_json(out / "energy_log.json", [b.to_dict() for b in state.energy_log])
    _dump_json(out / "levels.json", [
        {k: v for k, v in asdict(l).items() if k != "wall_time_s"} for l in state.levels])
    br = state.energy
    summary = {
        "config_echo": cfg.to_dict(),
        "energy_breakdown": br.to_dict(),
        "e_prime": br.e_prime,
        "residual": None,
        "residual_bound": br.e_prime / (4 * br.T ** 2),
        "dimension_estimate": None,
        "classical_threshold": classical_threshold(flow_def, cfg.t_max),
        "wall_time_s": 0.0,
    }
    _dump_json(out / "summary.json", summary)
    summary = analyze(out, cfg=cfg, flow=flow, domain=domain)
    if cfg.frames or cfg.trajectories:
        render(out, cfg=cfg, flow=flow, part=part)
    summary["wall_time_s"] = time.perf_counter() - t0
    _dump_json(out / "summary.json", summary)
    return summary


def analyze(run_dir, cfg: RunConfig | None = None, flow=None, domain=None) -> dict:
    """Run the analyses selected in the config on a finished run."""
    run_dir = Path(run_dir)
    cfg = cfg or _load_config(run_dir)
    flow = flow or read_trajectories(run_dir / "trajectories.csv")
    sp = run_dir / "summary.json"
    if not sp.exists():
        raise FileNotFoundError(f"{sp} not found; run 'solve' first")
    summary = json.loads(sp.read_text())
    if cfg.clusters:
        res = kmeans(flow, cfg.clusters, seed=cfg.seed)
        _dump_json(run_dir / "clusters.json", {
            "k": cfg.clusters, "seed": cfg.seed, "init": "kmeans++",
            "labels": res.labels.tolist(), "energy": res.energy,
            "energy_history": res.energy_history, "iterations": res.iterations,
            "reseeded": [list(r) for r in res.reseeded],
            "centroids": res.centroids.tolist(),
        })
    if cfg.dimension:
        order, eps = farthest_point_sampling(flow, 0)
        fit = box_dimension(eps)
        write_epsilon_curve(run_dir / "epsilon_curve.csv", eps)
        diag = asdict(fit)
        diag["order_head"] = order[:50].tolist()
        _dump_json(run_dir / "dimension.json", diag)
        summary["dimension_estimate"] = fit.dimension
    if cfg.pressure:
        field_ = pressure_field(Chain(np.transpose(flow.nodes, (1, 0, 2))))
        with open(run_dir / "pressure.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_index", "path_id", "x", "y", "gx", "gy"])
            for i in range(field_.positions.shape[0]):
                for j in range(field_.positions.shape[1]):
                    (x, y), (gx, gy) = field_.positions[i, j], field_.grad_p[i, j]
                    w.writerow([i + 1, j, f"{x:.17g}", f"{y:.17g}", f"{gx:.17g}", f"{gy:.17g}"])
    if cfg.residual:
        domain = domain or make_domain(cfg.domain_shape)
        est = incompressibility_residual(flow, domain, e_prime=summary["e_prime"])
        summary["residual"] = est.value
        _dump_json(run_dir / "residual.json", {
            "value": est.value, "bound": est.bound, "ratio": est.ratio,
            "times": est.times.tolist(), "costs": est.costs.tolist()})
    _dump_json(sp, summary)
    return summary


def render(run_dir, cfg: RunConfig | None = None, flow=None, part=None) -> dict:
    """Write SVG frames, probe bundles and pressure plots for a finished run."""
    run_dir = Path(run_dir)
    cfg = cfg or _load_config(run_dir)
    tp = run_dir / "trajectories.csv"
    if flow is None:
        if not tp.exists():
            raise FileNotFoundError(f"{tp} not found; run 'solve' first")
        flow = read_trajectories(tp)
    if part is None:
        part = _setup(cfg)[1]
    poly = part.domain.polygon
    initial = part.barycenters
    fig = run_dir / "figures"
    fig.mkdir(exist_ok=True)
    report = {}
    if cfg.frames:
        labels = None
        cp = run_dir / "clusters.json"
        if cfg.clusters and cp.exists():
            labels = np.array(json.loads(cp.read_text())["labels"])
        report["frames"] = [p.name for p in rd.render_frames(flow, poly, fig, initial, labels)]
    probes = []
    for n, pd in enumerate(cfg.trajectories):
        members = rd.render_probe(flow, poly, initial, pd.center, pd.radius,
                                  fig / f"probe_{n:02d}.svg")
        stats = rd.bundle_stats(flow, members, part.domain.total_area)
        probes.append({"center": list(pd.center), "radius": pd.radius, **stats})
    if probes:
        report["probes"] = probes
    if cfg.pressure and flow.T >= 2:
        field_ = pressure_field(Chain(np.transpose(flow.nodes, (1, 0, 2))))
        report["pressure"] = [p.name for p in rd.render_pressure(field_, poly, fig)]
    _dump_json(run_dir / "render.json", report)
    return report


# ---------------------------------------------------------------------------


def _set_threads():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return
    import warnings
    import numba
    with warnings.catch_warnings():
        # numba probes its threading layers here and warns about old TBB builds
        warnings.simplefilter("ignore")
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _error_report(path, exc, code):
    report = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, PartitionError):
        report["admissible_N"] = list(exc.admissible)
    else:
        report["traceback"] = traceback.format_exc()
    if path is not None:
        try:
            Path(path).mkdir(parents=True, exist_ok=True)
            _dump_json(Path(path) / "error.json", report)
        except OSError:
            pass
    print(json.dumps(report), file=sys.stderr)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="genflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("solve", help="minimize and write a run directory")
    p.add_argument("config", help="path to a JSON run config")
    p.add_argument("--output-dir", help="override output_dir from the config")
    for name in ("analyze", "render"):
        sub.add_parser(name, help=f"{name} an existing run").add_argument("run_dir")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads()
    out = None
    try:
        if args.cmd == "solve":
            raw = json.loads(Path(args.config).read_text())
            if args.output_dir:
                raw["output_dir"] = args.output_dir
            out = raw.get("output_dir")
            summary = solve(RunConfig.from_dict(raw))
            print(json.dumps({k: summary[k] for k in ("e_prime", "residual_bound",
                                                     "classical_threshold")}))
        elif args.cmd == "analyze":
            out = args.run_dir
            analyze(args.run_dir)
        else:
            out = args.run_dir
            render(args.run_dir)
    except PartitionError as exc:
        _error_report(out, exc, 2)
        return 2
    except Exception as exc:  # every module error ends in a report, never a bare traceback
        _error_report(out, exc, 1)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
