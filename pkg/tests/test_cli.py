import copy

import pytest
import yaml

from lbstrip.cli import PRESETS, ConfigError, main, parse_config
from lbstrip.density import read_field_csv

SMALL = {
    "mode": "stationary",
    "seed": 3,
    "n_particles": 3000,
    "domain": {"rho_left": 1.0, "rho_right": 0.5, "obstacles": [{"shape": "rect", "center": [2.0, 0.5], "size": [0.8, 0.6]}]},
    "kernel": {"mean_flight_time": 0.05},
    "grid": {"n_x": 100, "n_y": 25},
    "solver": {"tolerance": "1e-8"},
}


def write(tmp_path, tree, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return p


def snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_parse(name):
    tree = copy.deepcopy(PRESETS[name])
    tree["output_dir"] = "unused"
    cfg = parse_config(tree)
    assert cfg.mode == tree["mode"]


def test_stationary_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, SMALL)
    runs = []
    for i, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"out{i}"
        assert main(["run", str(cfg), "--output", str(out), "--workers", str(workers)]) == 0
        runs.append(snapshot(out))
    assert set(runs[0]) == {"density.csv", "oracle.csv", "relative_error.csv", "summary.txt"}
    assert runs[0] == runs[1] == runs[2]
    text = runs[0]["summary.txt"].decode()
    assert text.startswith("# config: ") and "# seed: 3" in text
    assert "max:" in text and "left_to_right:" in text
    f = read_field_csv(tmp_path / "out0" / "density.csv")
    assert f.spec.n_x == 100 and f.mask.sum() == 20 * 15


def test_invalid_obstacle_names_index(tmp_path, capsys):
    tree = copy.deepcopy(SMALL)
    tree["domain"]["obstacles"].append({"shape": "rect", "center": [3.9, 0.5], "size": [0.4, 0.4]})
    out = tmp_path / "bad"
    assert main(["run", str(write(tmp_path, tree)), "--output", str(out)]) != 0
    err = capsys.readouterr().err
    assert "[domain]" in err and "obstacle 1" in err
    assert not out.exists() or not any(out.iterdir())


@pytest.mark.parametrize(
    "patch, section",
    [
        ({"mode": "bogus"}, "mode"),
        ({"kernel": {"mean_flight_time": -1}}, "kernel"),
        ({"grid": {"n_x": 100, "n_y": 30}}, "grid"),
        ({"seed": -4}, "seed"),
        ({"mode": "residence-sweep"}, "sweep"),
        ({"solver": {"relaxation": 2.5}}, "solver"),
        ({"normalization": "median"}, "normalization"),
    ],
)
def test_bad_sections_are_named(tmp_path, capsys, patch, section):
    tree = dict(copy.deepcopy(SMALL), **patch)
    assert main(["run", str(write(tmp_path, tree)), "--output", str(tmp_path / "o")]) == 2
    assert f"[{section}]" in capsys.readouterr().err


def test_failure_removes_partial_outputs(tmp_path, capsys):
    # an obstacle hugging the left side leaves no free columns for the normalization fit
    tree = copy.deepcopy(SMALL)
    tree["domain"]["obstacles"] = [{"shape": "rect", "center": [0.2, 0.5], "size": [0.2, 0.5]}]
    out = tmp_path / "o"
    out.mkdir()
    (out / "keep.txt").write_text("unrelated")
    assert main(["run", str(write(tmp_path, tree)), "--output", str(out)]) == 1
    assert "[stationary]" in capsys.readouterr().err
    assert [p.name for p in out.iterdir()] == ["keep.txt"]


def test_oracle_mode(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--preset", "oracle-square", "--output", str(out)]) == 0
    rows = (out / "flux.csv").read_text().splitlines()
    assert rows[0].startswith("# config:")
    data = [r for r in rows if not r.startswith("#")]
    assert data[0] == "column,x,flux" and len(data) == 201
    assert "flux_relative_spread" in (out / "summary.txt").read_text()


def test_msd_mode(tmp_path):
    tree = {"mode": "msd-check", "seed": 2, "n_particles": 2000, "domain": {}, "kernel": {"mean_flight_time": 0.1},
            "msd": {"t_min_factor": 50, "t_max_factor": 100, "n_times": 10}}
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, tree)), "--output", str(out)]) == 0
    text = (out / "summary.txt").read_text()
    assert "fitted_D" in text and "expected_D: 0.0375" in text
    assert len([r for r in (out / "msd.csv").read_text().splitlines() if not r.startswith("#")]) == 11


def test_sweep_mode(tmp_path):
    tree = copy.deepcopy(SMALL)
    tree.update(mode="residence-sweep", n_particles=2000,
                sweep={"parameter": "obstacle_height", "values": [0.2, 0.6]})
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, tree)), "--output", str(out)]) == 0
    lines = [r for r in (out / "residence.csv").read_text().splitlines() if not r.startswith("#")]
    assert len(lines) == 4 and lines[1].startswith("baseline")


def test_preset_listing_and_errors(capsys):
    assert main(["presets"]) == 0
    assert "fig-empty" in capsys.readouterr().out
    assert main(["presets", "sweep-width"]) == 0
    assert "obstacle_width" in capsys.readouterr().out
    assert main(["run", "--preset", "nope"]) == 2
    assert main(["run"]) == 2
    with pytest.raises(ConfigError):
        parse_config([])
