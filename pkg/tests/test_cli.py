import csv
import json
import re
import shutil

import numpy as np
import pytest

from genflow.cli import SUMMARY_KEYS, ConfigError, RunConfig, main, read_trajectories


def write_cfg(tmp_path, name="cfg.json", **kw):
    cfg = {"flow": "disk_rotation", "t_max": 1.5708, "N": 64, "T_final": 4,
           "output_dir": str(tmp_path / "run")}
    cfg.update(kw)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p, cfg


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("smoke")
    p, cfg = write_cfg(tmp, N=256, T_final=8,
                       analyses={"clusters": 10, "dimension": True, "pressure": True,
                                 "residual": True},
                       render={"frames": True,
                               "trajectories": [{"center": [0, 0], "radius": 0.2}]})
    assert main(["solve", str(p)]) == 0
    return tmp / "run", cfg


def test_summary_keys_and_threshold(smoke):
    run, _ = smoke
    s = json.loads((run / "summary.json").read_text())
    assert tuple(s) == SUMMARY_KEYS
    assert s["classical_threshold"] is True
    assert s["energy_breakdown"]["total"] > 0
    assert s["e_prime"] == pytest.approx(
        (1 + 4 * 8 / 256 ** (1 / 3)) * s["energy_breakdown"]["total"])
    assert s["residual_bound"] == pytest.approx(s["e_prime"] / (4 * 64))
    assert s["residual"] <= 1.05 * s["residual_bound"]
    assert s["dimension_estimate"] is not None and s["wall_time_s"] > 0


def test_trajectory_csv_format(smoke):
    run, _ = smoke
    with open(run / "trajectories.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path_id", "t", "x", "y"]
    assert len(rows) == 1 + 256 * 9
    assert [r[1] for r in rows[1:10]] == [f"{i / 8:.17g}" for i in range(9)]
    f = read_trajectories(run / "trajectories.csv")
    assert f.nodes.shape == (256, 9, 2)
    # 17 significant digits round-trip doubles exactly
    x = float(rows[5][2])
    assert float(f"{x:.17g}") == x


def test_epsilon_and_cluster_outputs(smoke):
    run, _ = smoke
    with open(run / "epsilon_curve.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["i", "epsilon", "log_i", "log_inv_eps"]
    assert len(rows) == 257
    eps = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(eps) <= 0)
    cl = json.loads((run / "clusters.json").read_text())
    assert cl["k"] == 10 and len(cl["labels"]) == 256 and cl["init"] == "kmeans++"
    dim = json.loads((run / "dimension.json").read_text())
    assert {"dimension", "bracket_lo", "bracket_hi", "i_lo", "i_hi"} <= set(dim)


def test_frames_and_legend(smoke):
    run, _ = smoke
    frames = sorted(p.name for p in (run / "figures").glob("frame_*.svg"))
    assert frames == [f"frame_{i:02d}.svg" for i in range(9)]
    svg = (run / "figures" / "frame_00.svg").read_text()
    assert svg.count('class="legend"') == 10
    assert len(set(re.findall(r'<circle [^>]*fill="(#[0-9a-f]{6})"', svg))) == 10
    assert (run / "figures" / "probe_00.svg").exists()
    assert len(list((run / "figures").glob("pressure_*.svg"))) == 7
    rep = json.loads((run / "render.json").read_text())
    assert rep["probes"][0]["count"] > 0


def test_rerender_and_reanalyze(smoke, tmp_path):
    run, _ = smoke
    copy = tmp_path / "copy"
    shutil.copytree(run, copy)
    before = (copy / "clusters.json").read_text()
    assert main(["analyze", str(copy)]) == 0
    assert (copy / "clusters.json").read_text() == before
    svg = (copy / "figures" / "frame_03.svg").read_text()
    assert main(["render", str(copy)]) == 0
    assert (copy / "figures" / "frame_03.svg").read_text() == svg


def test_four_segment_run_gives_five_frames(tmp_path):
    p, _ = write_cfg(tmp_path, N=16, render={"frames": True})
    assert main(["solve", str(p)]) == 0
    frames = sorted(x.name for x in (tmp_path / "run" / "figures").glob("*.svg"))
    assert frames == [f"frame_{i:02d}.svg" for i in range(5)]
    # color by initial position when no clustering ran
    svg = (tmp_path / "run" / "figures" / "frame_00.svg").read_text()
    assert 'class="legend"' not in svg


def test_beltrami_beyond_threshold(tmp_path):
    p, _ = write_cfg(tmp_path, flow="square_beltrami", t_max=1.5, N=16, T_final=2)
    assert main(["solve", str(p)]) == 0
    s = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert s["classical_threshold"] is False


def test_invalid_n_exit_code(tmp_path, capsys):
    p, _ = write_cfg(tmp_path, flow="square_beltrami", N=1000)
    assert main(["solve", str(p)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["admissible_N"] == [961, 1024, 1089]
    rep = json.loads((tmp_path / "run" / "error.json").read_text())
    assert rep["exit_code"] == 2 and "961" in rep["message"]


def test_other_errors_give_json_report(tmp_path, capsys):
    p, _ = write_cfg(tmp_path, flow="taylor_green")
    assert main(["solve", str(p)]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"
    assert main(["render", str(tmp_path / "nowhere")]) == 1
    assert main(["analyze", str(tmp_path / "nowhere")]) == 1


def test_config_validation():
    base = {"flow": "disk_rotation", "t_max": 1.0, "N": 16, "T_final": 2, "output_dir": "x"}
    RunConfig.from_dict(base)
    for bad in ({"t_max": 0}, {"t_max": -1.0}, {"analyses": {"clusters": 0}},
                {"analyses": {"spectra": True}}, {"render": {"trajectories": [{"radius": 1}]}},
                {"bogus": 1}):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({**base, **bad})
    cfg = RunConfig.from_dict({**base, "render": {"trajectories": [{"center": [0, 0], "radius": 0.1}]}})
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_byte_identical_reruns(tmp_path, monkeypatch):
    monkeypatch.setenv("GENFLOW_THREADS", "1")
    p, _ = write_cfg(tmp_path, N=64, analyses={"clusters": 3, "dimension": True, "residual": True,
                                               "pressure": True})
    outputs = []
    for _ in range(2):
        assert main(["solve", str(p)]) == 0
        run = tmp_path / "run"
        files = {}
        for f in sorted(run.rglob("*")):
            if f.suffix in (".csv", ".json"):
                data = f.read_text()
                if f.name == "summary.json":
                    s = json.loads(data)
                    s.pop("wall_time_s")
                    data = json.dumps(s)
                files[f.relative_to(run)] = data
        outputs.append(files)
        shutil.rmtree(run)
    assert outputs[0] == outputs[1]
