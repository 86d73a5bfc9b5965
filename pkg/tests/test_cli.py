import csv
import json

import numpy as np
import pytest

from rops3d.cli import EXIT_CONFIG, EXIT_ERROR, EXIT_VERSION, main
from rops3d.io import save_mesh
from rops3d.shapes import bundled_model


@pytest.fixture(scope="module")
def models(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    paths = []
    for name in ("blob_a", "blob_b"):
        p = d / f"{name}.ply"
        save_mesh(bundled_model(name, 4), p)
        paths.append(str(p))
    return paths


@pytest.fixture(scope="module")
def library(models, tmp_path_factory):
    out = tmp_path_factory.mktemp("lib") / "lib.ropslib"
    assert main(["build-library", "--models", *models, "--n-seeds", "300", "-o", str(out)]) == 0
    return out


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestBuildLibrary:
    def test_deterministic_bytes(self, models, library, tmp_path):
        again = tmp_path / "again.ropslib"
        assert main(["build-library", "--models", *models, "--n-seeds", "300", "-o", str(again)]) == 0
        assert again.read_bytes() == library.read_bytes()

    def test_survivors_bounded(self, models, tmp_path, capsys):
        assert main(["build-library", "--models", models[0], "--n-seeds", "50", "-o", str(tmp_path / "l")]) == 0
        count = int(capsys.readouterr().out.split("\t")[1].split()[0])
        assert 0 < count <= 50

    @pytest.mark.slow
    def test_bundled_model_by_name(self, tmp_path, capsys):
        assert main(["build-library", "--models", "blob_a", "--n-seeds", "500",
                     "-o", str(tmp_path / "a.ropslib")]) == 0
        count = int(capsys.readouterr().out.split("\t")[1].split()[0])
        assert 400 < count <= 500

    def test_missing_model(self, tmp_path):
        assert main(["build-library", "--models", str(tmp_path / "nope.ply"), "-o", str(tmp_path / "l")]) == EXIT_CONFIG

    def test_parse_error_exit(self, tmp_path):
        bad = tmp_path / "bad.ply"
        bad.write_text("ply\nformat ascii 1.0\nend_header\n")
        assert main(["build-library", "--models", str(bad), "-o", str(tmp_path / "l")]) == EXIT_ERROR
        assert not (tmp_path / "l").exists()


class TestDescribe:
    def test_csv_and_sidecar(self, models, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["describe", "--mesh", models[0], "--vertices", "0", "5", "9", "-o", str(out)]) == 0
        rows = _rows(out)
        assert rows[0][:5] == ["feature_id", "x", "y", "z", "f0"] and rows[0][-1] == "f134"
        assert [r[0] for r in rows[1:]] == ["0", "5", "9"]
        side = json.loads(out.with_suffix(".json").read_text())
        assert side["rops"]["L"] == 5 and side["rops"]["T"] == 3

    def test_bad_vertex(self, models, tmp_path):
        assert main(["describe", "--mesh", models[0], "--vertices", "999999", "-o", str(tmp_path / "d.csv")]) == EXIT_CONFIG


class TestSynthAndRecognize:
    def test_round_trip(self, models, library, tmp_path):
        scenes = tmp_path / "scenes"
        assert main(["synth-scene", "--models", *models, "--k", "2", "--n-scenes", "2", "--seed", "5",
                     "-o", str(scenes)]) == 0
        plys = sorted(str(p) for p in scenes.glob("*.ply"))
        gts = [p.replace(".ply", ".gt.json") for p in plys]
        out = tmp_path / "rec"
        assert main(["recognize", "--library", str(library), "--scenes", *plys, "--ground-truth", *gts,
                     "-o", str(out)]) == 0
        rows = _rows(out / "summary.csv")
        assert "rate" in rows[0] and "mean_rotation_error_deg" in rows[0]
        for r in rows[1:]:
            assert float(r[rows[0].index("rate")]) == 1.0
        res = json.loads((out / "scene000.result.json").read_text())
        assert len(res["instances"]) == 2

    def test_noisy_batch(self, models, library, tmp_path):
        scenes = tmp_path / "noisy"
        assert main(["synth-scene", "--models", *models, "--k", "2", "--n-scenes", "3", "--seed", "9",
                     "--noise", "0.1", "-o", str(scenes)]) == 0
        plys = sorted(str(p) for p in scenes.glob("*.ply"))
        gts = [p.replace(".ply", ".gt.json") for p in plys]
        out = tmp_path / "rec"
        assert main(["recognize", "--library", str(library), "--scenes", *plys, "--ground-truth", *gts,
                     "-o", str(out)]) == 0
        rows = _rows(out / "summary.csv")
        h = rows[0]
        assert len(rows) == 4
        assert all(int(r[h.index("recognized")]) == 2 and int(r[h.index("false_positives")]) == 0
                   for r in rows[1:])

    def test_without_truth_omits_pose_columns(self, models, library, tmp_path):
        main(["synth-scene", "--models", *models, "--k", "1", "-o", str(tmp_path / "s.ply")])
        assert main(["recognize", "--library", str(library), "--scenes", str(tmp_path / "s.ply"),
                     "-o", str(tmp_path / "r")]) == 0
        header = _rows(tmp_path / "r" / "summary.csv")[0]
        assert header == ["scene", "instances", "features", "seconds"]

    def test_param_mismatch_is_version_error(self, models, library, tmp_path):
        main(["synth-scene", "--models", *models, "--k", "1", "-o", str(tmp_path / "s.ply")])
        assert main(["recognize", "--library", str(library), "--scenes", str(tmp_path / "s.ply"),
                     "--T", "4", "-o", str(tmp_path / "r")]) == EXIT_VERSION

    def test_malformed_truth_is_config_error(self, models, library, tmp_path):
        main(["synth-scene", "--models", *models, "--k", "1", "-o", str(tmp_path / "s.ply")])
        (tmp_path / "gt.json").write_text("{not json")
        assert main(["recognize", "--library", str(library), "--scenes", str(tmp_path / "s.ply"),
                     "--ground-truth", str(tmp_path / "gt.json"), "-o", str(tmp_path / "r")]) == EXIT_CONFIG
        assert main(["rp-curve", "--models", *models, "--scene", str(tmp_path / "s.ply"),
                     "--ground-truth", str(tmp_path / "gt.json"), "-o", str(tmp_path / "rp")]) == EXIT_CONFIG

    def test_synth_is_deterministic(self, models, tmp_path):
        for name in ("a", "b"):
            main(["synth-scene", "--models", *models, "--noise", "0.2", "--seed", "9", "-o", str(tmp_path / f"{name}.ply")])
        assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()
        assert (tmp_path / "a.gt.json").read_text() == (tmp_path / "b.gt.json").read_text()


class TestBenchmarks:
    def test_lrf_error_outputs(self, models, tmp_path):
        out = tmp_path / "lrf"
        args = ["lrf-error", "--models", *models, "--n-pairs", "30", "--seed", "3", "-o", str(out)]
        assert main(args) == 0
        rows = _rows(out / "lrf_error.csv")
        assert rows[0] == ["bin_lo_deg", "bin_hi_deg", "count"] and len(rows) == 19
        assert (out / "lrf_error.png").stat().st_size > 0
        first = (out / "lrf_error.csv").read_bytes()
        assert main(args) == 0
        assert (out / "lrf_error.csv").read_bytes() == first

    def test_lrf_error_identity(self, models, tmp_path):
        out = tmp_path / "lrf0"
        assert main(["lrf-error", "--models", models[0], "--n-pairs", "20", "--noise", "0",
                     "--decimation", "1", "--no-figures", "-o", str(out)]) == 0
        assert json.loads((out / "lrf_error.json").read_text())["fraction_below_10deg"] == 1.0
        assert not (out / "lrf_error.png").exists()

    def test_rp_levels(self, models, tmp_path):
        out = tmp_path / "rp"
        assert main(["rp-curve", "--models", *models, "--noise-levels", "0", "0.5", "--n-features", "60",
                     "-o", str(out)]) == 0
        assert _rows(out / "rp_sigma0.csv")[0] == ["threshold", "recall", "one_minus_precision", "tp",
                                                   "fp", "positives", "matches"]
        aucs = {r[0]: float(r[1]) for r in _rows(out / "rp_summary.csv")[1:]}
        assert aucs["sigma0"] == pytest.approx(1.0) and aucs["sigma0.5"] < aucs["sigma0"]
        assert (out / "rp_curves.png").exists()

    def test_auc_falls_with_noise(self, models, tmp_path):
        out = tmp_path / "rp3"
        assert main(["rp-curve", "--models", *models, "--noise-levels", "0.1", "0.3", "0.5",
                     "--n-features", "80", "--no-figures", "-o", str(out)]) == 0
        aucs = [float(r[1]) for r in _rows(out / "rp_summary.csv")[1:]]
        assert len(aucs) == 3 and aucs[0] > aucs[1] > aucs[2]

    def test_sweep(self, models, tmp_path):
        out = tmp_path / "sw"
        assert main(["sweep-params", "--models", *models, "--sweep", "T", "--n-features", "30",
                     "--no-figures", "-o", str(out)]) == 0
        rows = _rows(out / "sweep_T.csv")
        assert [int(r[0]) for r in rows[1:]] == list(range(1, 7))
        assert [int(r[1]) for r in rows[1:]] == [45 * T for T in range(1, 7)]


class TestConfig:
    def test_config_file_and_override(self, models, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"models": models[:1], "n-pairs": 10, "noise": 0.0, "decimation": 1.0,
                                   "no_figures": True}))
        out = tmp_path / "o"
        assert main(["lrf-error", "--config", str(cfg), "--n-pairs", "12", "-o", str(out)]) == 0
        assert json.loads((out / "lrf_error.json").read_text())["pairs"] == 12

    @pytest.mark.parametrize("text", ["[1]", "{\"bogus\": 1}", "{\"noise\": {\"a\": 1}}", "{oops"])
    def test_bad_config(self, tmp_path, text):
        cfg = tmp_path / "c.json"
        cfg.write_text(text)
        assert main(["lrf-error", "--config", str(cfg)]) == EXIT_CONFIG

    def test_invalid_values(self, models, tmp_path):
        assert main(["lrf-error", "--models", models[0], "--decimation", "0", "-o", str(tmp_path)]) == EXIT_CONFIG
        assert main(["recognize", "--library", "x", "--scenes", "y", "--tau-f", "-1"]) != 0

    def test_usage_error_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code != 0
