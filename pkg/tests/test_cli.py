import argparse
import json

import pytest

from blotforensics.cli import EXIT_CONTRACT, EXIT_IO, EXIT_OK, build_parser, main
from blotforensics.core import DatasetManifest, load_features
from blotforensics.evaluation import EvalReport
from blotforensics.evaluation.protocols import read_grid_csv
from blotforensics.plotting import read_matrix_csv

FOUR = ["pristine-clean", "deconv-checkerboard", "resize-conv", "smooth-upsample"]
SMALL = ["--crop", "128", "--patch-size", "32", "--glcm-distances", "4,8"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """100 training images per source at 256 px and 100 held-out images for two sources."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-fixtures", "--out", str(root / "train"), "--count", "100",
                 "--generators", *FOUR, "-q"]) == EXIT_OK
    assert main(["gen-fixtures", "--out", str(root / "held"), "--count", "100", "--seed", "50000",
                 "--generators", "pristine-clean", "deconv-checkerboard", "-q"]) == EXIT_OK
    assert main(["train", "--manifest", str(root / "train" / "manifest.json"),
                 "--out-dir", str(root / "models"), "-q"]) == EXIT_OK
    return root


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    """Six 128 px images per generator for fast command checks."""
    root = tmp_path_factory.mktemp("tiny")
    assert main(["gen-fixtures", "--out", str(root), "--count", "6", "--size", "128", "-q"]) == EXIT_OK
    return root


def attribute_json(capsys, image, model_dir, *extra):
    code, out, err = run(capsys, "attribute", image, "--model-dir", model_dir, *extra)
    assert code == EXIT_OK, err
    return json.loads(out)


class TestAttribute:
    def test_held_out_checkerboard(self, corpus, capsys):
        held = DatasetManifest.load(corpus / "held" / "manifest.json")
        paths = held.paths("deconv-checkerboard")
        assert len(paths) == 100
        labels = [attribute_json(capsys, p, corpus / "models")["label"] for p in paths]
        assert labels.count("deconv-checkerboard") >= 95

    def test_threshold_keeps_pristine_known(self, corpus, capsys):
        """
        Calibrate t just below the lowest pristine self-score seen in training
        (pristine-clean images scored by the pristine-clean model).
        """
        train = DatasetManifest.load(corpus / "train" / "manifest.json")
        self_scores = [attribute_json(capsys, p, corpus / "models")["scores"]["pristine-clean"]
                       for p in train.paths("pristine-clean")]
        t = min(self_scores) - 0.05
        held = DatasetManifest.load(corpus / "held" / "manifest.json")
        labels = [attribute_json(capsys, p, corpus / "models", "--threshold", t)["label"]
                  for p in held.paths("pristine-clean")]
        assert "unknown" not in labels
        # t is not vacuous: the pristine model scores a checkerboard image below it
        deconv = held.paths("deconv-checkerboard")[0]
        assert attribute_json(capsys, deconv, corpus / "models")["scores"]["pristine-clean"] < t

    def test_payload(self, corpus, capsys):
        img = DatasetManifest.load(corpus / "held" / "manifest.json").paths()[0]
        out = attribute_json(capsys, img, corpus / "models", "--top", "3")
        assert set(out["scores"]) == set(FOUR)
        assert out["best_source"] == max(out["scores"], key=out["scores"].get)
        assert out["provenance"]["family"] == "PATCH-FFT-PEAKS"
        assert out["provenance"]["extractor"] == "bammey-c"
        assert out["provenance"]["config"]["bands"]
        top = out["explanation"]["top_features"]
        assert len(top) == 3
        assert abs(top[0]["contribution"]) >= abs(top[-1]["contribution"])
        for item in top:
            assert item["contribution"] == pytest.approx(item["value"] * item["z"])
        assert len(out["features"]) == 24

    def test_config_mismatch_refused(self, corpus, capsys):
        img = DatasetManifest.load(corpus / "held" / "manifest.json").paths()[0]
        code, out, err = run(capsys, "attribute", img, "--model-dir", corpus / "models",
                             "--method", "gaussian")
        assert code == EXIT_CONTRACT
        assert "method" in err and "gaussian" in err and not out

    def test_corrupt_image(self, corpus, capsys, tmp_path):
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"\x89PNG\r\n\x1a\nnot really")
        code, _, err = run(capsys, "attribute", bad, "--model-dir", corpus / "models")
        assert code == EXIT_IO
        assert str(bad) in err

    def test_missing_model_dir(self, corpus, capsys, tmp_path):
        img = DatasetManifest.load(corpus / "held" / "manifest.json").paths()[0]
        code, _, _ = run(capsys, "attribute", img, "--model-dir", tmp_path / "none")
        assert code == EXIT_IO


class TestExtract:
    def test_rows_columns_determinism(self, tiny, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        code, _, err = run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out", a, *SMALL)
        assert code == EXIT_OK and "extract:" in err
        assert run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out", b, *SMALL,
                   "-q")[0] == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        rows = load_features(a)
        manifest = DatasetManifest.load(tiny / "manifest.json")
        assert len(rows) == len(manifest.entries) == 30
        assert [lbl for _, lbl in rows] == [lbl for _, lbl in manifest.entries]
        assert all(fv.dim == 24 for fv, _ in rows)

    def test_glcm_family_dim(self, tiny, capsys, tmp_path):
        out = tmp_path / "g.csv"
        assert run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out", out,
                   "--family", "FFT-GLCM", "--sources", "resize-conv", *SMALL, "-q")[0] == EXIT_OK
        rows = load_features(out)
        # 5 statistics x 2 directions x 2 distances
        assert len(rows) == 6 and rows[0][0].dim == 20

    def test_decode_failures_skipped(self, tiny, capsys, tmp_path):
        manifest = DatasetManifest.load(tiny / "manifest.json")
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"garbage")
        entries = manifest.entries[:3] + [(str(bad), "resize-conv")]
        DatasetManifest(tiny, entries).save(tmp_path / "m.json")
        # absolute root so the relative entries still resolve
        data = json.loads((tmp_path / "m.json").read_text())
        data["root"] = str(tiny)
        (tmp_path / "m.json").write_text(json.dumps(data))
        code, _, err = run(capsys, "extract", "--manifest", tmp_path / "m.json",
                           "--out", tmp_path / "f.csv", *SMALL, "-q")
        assert code == EXIT_IO
        assert "bad.png" in err
        assert len(load_features(tmp_path / "f.csv")) == 3

    def test_maps(self, tiny, capsys, tmp_path):
        code, _, _ = run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out",
                         tmp_path / "f.csv", "--maps", tmp_path / "maps", "--maps-count", "2",
                         *SMALL, "-q")
        assert code == EXIT_OK
        assert (tmp_path / "maps" / "average-maps.png").stat().st_size > 0
        spec = read_matrix_csv(tmp_path / "maps" / "deconv-checkerboard-patch-spectrum.csv")
        assert spec.shape == (32, 32)
        assert (tmp_path / "maps" / "deconv-checkerboard-patch-spectrum.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")


class TestEvaluate:
    def test_closed_summary_matches_json(self, tiny, capsys, tmp_path):
        code, out, _ = run(capsys, "eval-closed", "--manifest", tiny / "manifest.json", "--out",
                           tmp_path / "r.json", "--figures", tmp_path / "fig", *SMALL, "-q")
        assert code == EXIT_OK
        report = EvalReport.from_dict(json.loads((tmp_path / "r.json").read_text()))
        assert f"Bacc       {report.bacc!r}" in out
        assert f"AUC        {report.auc!r}" in out
        for name in ("closed-set-confusion.png", "closed-set-roc.png"):
            assert (tmp_path / "fig" / name).read_bytes()[:4] == b"\x89PNG"

    def test_features_input_equals_manifest_input(self, tiny, capsys, tmp_path):
        run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out", tmp_path / "f.csv",
            *SMALL, "-q")
        a = run(capsys, "eval-ovr", "--manifest", tiny / "manifest.json", *SMALL, "-q")[1]
        b = run(capsys, "eval-ovr", "--features", tmp_path / "f.csv", *SMALL, "-q")[1]
        assert a == b

    def test_features_family_mismatch(self, tiny, capsys, tmp_path):
        run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out", tmp_path / "f.csv",
            *SMALL, "-q")
        code, _, err = run(capsys, "eval-ovr", "--features", tmp_path / "f.csv", "--family", "GLCM",
                           *SMALL)
        assert code == EXIT_CONTRACT and "GLCM" in err

    def test_seed_reproducible(self, tiny, capsys, tmp_path):
        for name in ("a", "b"):
            run(capsys, "eval-open", "--manifest", tiny / "manifest.json", "--pristine-a",
                "pristine-clean", "--pristine-b", "pristine-processed", "--classifier", "if",
                "--seed", "3", "--out", tmp_path / f"{name}.json", *SMALL, "-q")
        a = json.loads((tmp_path / "a.json").read_text())
        b = json.loads((tmp_path / "b.json").read_text())
        a.pop("seconds"), b.pop("seconds")
        assert a == b

    def test_open_unknown_source(self, tiny, capsys):
        code, _, err = run(capsys, "eval-open", "--manifest", tiny / "manifest.json", "--pristine-a",
                           "pristine-clean", "--pristine-b", "nope", *SMALL)
        assert code == EXIT_CONTRACT and "nope" in err

    def test_noise_grid(self, tiny, capsys, tmp_path):
        code, out, _ = run(capsys, "noise-grid", "--manifest", tiny / "manifest.json",
                           "--families", "GLCM", "FFT-PEAKS", "--methods", "none", "mean", "gaussian",
                           "--out-csv", tmp_path / "grid.csv", "--out", tmp_path / "grid.json",
                           "--figures", tmp_path / "fig", *SMALL, "-q")
        assert code == EXIT_OK
        rows = read_grid_csv(tmp_path / "grid.csv")
        assert len(rows) == 6
        assert len(json.loads((tmp_path / "grid.json").read_text())) == 6
        for row in rows:
            assert repr(row["bacc"]) in out
        assert (tmp_path / "fig" / "noise-grid.png").exists()


class TestFlags:
    def test_exit_codes_for_bad_flags(self, capsys, tmp_path):
        assert run(capsys, "train", "--out-dir", tmp_path)[0] == EXIT_CONTRACT
        assert run(capsys, "extract", "--manifest", tmp_path / "m.json", "--out", tmp_path / "f.csv",
                   "--patch-size", "100")[0] == EXIT_CONTRACT
        assert run(capsys, "extract", "--manifest", tmp_path / "m.json", "--out", tmp_path / "f.csv",
                   "--bands", "0.7,0")[0] == EXIT_CONTRACT
        assert run(capsys, "extract", "--manifest", tmp_path / "m.json",
                   "--out", tmp_path / "f.csv")[0] == EXIT_IO

    def test_config_precedence(self, tiny, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"crop": 128, "patch": 32, "method": "gaussian"}))
        run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out", tmp_path / "f.csv",
            "--config", cfg, "--method", "mean", "--sources", "resize-conv", "-q")
        rows = load_features(tmp_path / "f.csv")
        assert rows[0][0].extractor == "mean"
        cfg.write_text("{not json")
        assert run(capsys, "extract", "--manifest", tiny / "manifest.json", "--out",
                   tmp_path / "g.csv", "--config", cfg)[0] == EXIT_CONTRACT

    def test_every_flag_documented(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        assert set(sub.choices) == {"gen-fixtures", "extract", "train", "attribute", "eval-closed",
                                    "eval-open", "eval-ovr", "noise-grid"}
        for name, p in sub.choices.items():
            for action in p._actions:
                if isinstance(action, argparse._HelpAction):
                    continue
                assert action.help, f"{name} {action.option_strings or action.dest} lacks help"

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["attribute", "--help"])
        assert exc.value.code == 0
        assert "--model-dir" in capsys.readouterr().out
