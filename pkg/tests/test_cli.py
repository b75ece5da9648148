from pathlib import Path

import numpy as np
import pytest

from mcdp.basis import combine, init_weights
from mcdp import cli
from mcdp.cli import main
from mcdp.errors import NonFiniteObjective
from mcdp.io import load_rig, read_depth

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "canonical.toml"


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    assert main(["synth", "--spec", "canonical", "--out", str(out)]) == 0
    return out


def read_kv(path):
    return dict(line.split("=", 1) for line in Path(path).read_text().splitlines())


def test_synth_from_file_matches_canonical(fixture_dir, tmp_path):
    assert main(["synth", "--spec", str(CONFIG), "--out", str(tmp_path)]) == 0
    for name in ("cam0", "cam1"):
        for rel in (f"{name}/image.pgm", f"{name}/basis_00.mcdp", f"gt/{name}.mcdp"):
            assert (tmp_path / rel).read_bytes() == (fixture_dir / rel).read_bytes()


def test_refine_m0_is_uniform(fixture_dir, tmp_path):
    rig = fixture_dir / "rig.toml"
    assert main(["refine", "--rig", str(rig), "-m", "0", "--out", str(tmp_path)]) == 0
    scene = load_rig(rig)
    for v in scene.views:
        ref = combine(v.bases, init_weights(v.bases.n))
        got = read_depth(tmp_path / f"{v.name}.mcdp")
        np.testing.assert_array_equal(got.values, ref.values.astype(np.float32))


def test_evaluate_gt_against_itself(fixture_dir, capsys):
    rc = main(["evaluate", "--rig", str(fixture_dir / "rig.toml"),
               "--pred", str(fixture_dir / "gt"), "--gt", str(fixture_dir / "gt"),
               "--metrics-out", str(fixture_dir / "self.txt")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "abs_rel" in out and "delta_125" in out
    kv = read_kv(fixture_dir / "self.txt")
    assert float(kv["abs_rel"]) == 0 and float(kv["delta_125"]) == 1


def test_full_pipeline(fixture_dir, tmp_path, capsys):
    rig = str(fixture_dir / "rig.toml")
    trace = tmp_path / "trace.tsv"
    pred = tmp_path / "pred"
    assert main(["refine", "--rig", rig, "-m", "2", "--out", str(pred), "--trace", str(trace)]) == 0
    lines = trace.read_text().splitlines()
    assert lines[0].startswith("# round\tobjective\t")
    rows = [list(map(float, line.split("\t"))) for line in lines[1:]]
    assert [int(r[0]) for r in rows] == [0, 1, 2]
    dc = [np.mean(r[2:]) for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(dc, dc[1:])) and dc[-1] < dc[0]
    assert (pred / "weights.txt").is_file()

    assert main(["evaluate", "--rig", rig, "--pred", str(pred), "--gt", str(fixture_dir / "gt"),
                 "--no-median-scaling"]) == 0
    kv = read_kv(pred / "metrics.txt")
    assert float(kv["cam1.abs_rel"]) < 0.05
    assert "dep_con.cam0<-cam1" in kv
    # six significant digits
    assert all(len(v.replace(".", "").replace("-", "").lstrip("0").split("e")[0]) <= 6
               for k, v in kv.items() if k != "pixel_count")


def test_warp(fixture_dir, tmp_path):
    out = tmp_path / "w.mcdp"
    assert main(["warp", "--rig", str(fixture_dir / "rig.toml"), "--from", "cam1", "--to", "cam0",
                 "--out", str(out)]) == 0
    D = read_depth(out)
    assert D.shape == (96, 128) and 0 < D.valid.mean() < 0.5


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["refine", "--bogus"])
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_rig_exits_1(tmp_path, capsys):
    assert main(["refine", "--rig", str(tmp_path / "none.toml")]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_camera_exits_1(fixture_dir, tmp_path):
    assert main(["warp", "--rig", str(fixture_dir / "rig.toml"), "--from", "nope", "--to", "cam0",
                 "--out", str(tmp_path / "w.mcdp")]) == 1


def test_numeric_failure_exits_2(fixture_dir, capsys, monkeypatch):
    # valid rigs do not reach a non-finite objective, so inject the failure
    def boom(scene, cfg):
        raise NonFiniteObjective("objective is nan", [])

    monkeypatch.setattr(cli, "refine", boom)
    rc = main(["refine", "--rig", str(fixture_dir / "rig.toml"), "-m", "1"])
    assert rc == 2
    assert "numeric" in capsys.readouterr().err
