"""CLI contracts: every subcommand, exit codes, and byte-identical reruns."""

import json

import numpy as np
import pytest

from radixnet.cli import main
from radixnet.synth import (synthetic_landmark_case, write_landmarks_csv,
                            write_pointset_csv, write_predictions_csv)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def exact_parabola_csv(tmp_path):
    xs = np.linspace(0, 18, 19)
    rows = [f"{x},{x * x}" for x in xs] + ["9.0,70.0"]
    path = tmp_path / "parabola.csv"
    path.write_text("\n".join(rows) + "\n")
    return path


class TestFit:
    def test_exact_parabola_coefficients(self, capsys, tmp_path,
                                         exact_parabola_csv):
        out_json = tmp_path / "curve.json"
        code, out, _ = run(capsys, "fit", str(exact_parabola_csv),
                           "--out", str(out_json), "--size", "400x32")
        assert code == 0
        curve = json.loads(out_json.read_text())
        assert curve["degree"] == 2
        assert abs(curve["coefficients"][0] - 1.0) <= 1e-9
        assert abs(curve["coefficients"][1]) <= 1e-9
        assert abs(curve["coefficients"][2]) <= 1e-9
        assert "a=" in out and "b=" in out and "c=" in out
        assert "np.float64" not in out  # plain float formatting

    def test_mask_output(self, capsys, tmp_path, exact_parabola_csv):
        mask = tmp_path / "mask.pgm"
        code, _, _ = run(capsys, "fit", str(exact_parabola_csv),
                         "--mask", str(mask), "--size", "400x32",
                         "--out", str(tmp_path / "c.json"))
        assert code == 0
        assert mask.read_text().startswith("P2\n32 400\n255\n")

    def test_short_file_rejected_with_count(self, capsys, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("\n".join(f"{i},{i}" for i in range(18)) + "\n")
        code, _, err = run(capsys, "fit", str(path))
        assert code == 1
        assert "18 points" in err

    def test_noisy_fit_beats_noise_level(self, capsys, tmp_path):
        lm = tmp_path / "lm.csv"
        truth = tmp_path / "truth.csv"
        code, _, _ = run(capsys, "gen", "landmarks", "--out", str(lm),
                         "--truth", str(truth), "--seed", "5",
                         "--noise", "1.5")
        assert code == 0
        from radixnet.curvefit import fitted_pointset, read_landmarks_csv
        from radixnet.metrics import SurfacePointSet, asd, read_pointset_csv
        fitted = fitted_pointset(read_landmarks_csv(lm), degree=2)
        gt = read_pointset_csv(truth)
        value = asd(SurfacePointSet(fitted), gt)
        assert value < 1.5  # below the generator noise amplitude


class TestCost:
    def test_paper_rows_vii(self, capsys):
        code, out, _ = run(capsys, "cost", "--paper-rows", "vii")
        assert code == 0
        lines = [l for l in out.splitlines() if l.strip().startswith("mhsa")]
        assert len(lines) == 8
        assert "83558400" in out

    def test_explicit_sizes_and_csv(self, capsys, tmp_path):
        csv_path = tmp_path / "cost.csv"
        code, out, _ = run(capsys, "cost", "--sizes", "16x16x16",
                           "--unit", "8x8", "--csv", str(csv_path))
        assert code == 0
        assert csv_path.read_text().startswith("variant,C,H,W,h,w,phi")

    def test_missing_spec_rejected(self, capsys):
        code, _, err = run(capsys, "cost")
        assert code == 1 and "sizes" in err

    def test_bad_size_string(self, capsys):
        code, _, err = run(capsys, "cost", "--sizes", "16x16")
        assert code == 1


class TestDemo:
    def test_trace_ends_with_scores(self, capsys):
        code, out, _ = run(capsys, "demo")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "input: 4x32x32"
        assert lines[-1].startswith("scores: [")

    def test_golden_passes(self, capsys):
        code, out, _ = run(capsys, "demo", "--golden")
        assert code == 0
        assert "golden check passed" in out

    @pytest.mark.parametrize("ablate", ["local", "global", "fusion"])
    def test_ablations_run(self, capsys, ablate):
        code, out, _ = run(capsys, "demo", "--ablate", ablate)
        assert code == 0
        assert "scores: [" in out

    def test_custom_config(self, capsys, tmp_path):
        from radixnet import model as M
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(M.config_to_json(M.TINY_CONFIG))
        code, out, _ = run(capsys, "demo", "--config", str(cfg_path))
        assert code == 0
        assert "input: 4x16x16" in out

    def test_invalid_config_exits_one(self, capsys, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text('{"fusion_blocks": 3}')
        code, _, err = run(capsys, "demo", "--config", str(cfg_path))
        assert code == 1
        assert "block" in err or "fusion" in err


class TestGradcheck:
    def test_ops_scope_passes(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "ops")
        assert code == 0
        assert "PASS" in out and "FAIL" not in out

    def test_corrupted_gradient_fails_with_name(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "gmhsa",
                           "--corrupt", "row_table")
        assert code == 2
        assert any("row_table" in l and "FAIL" in l
                   for l in out.splitlines())

    def test_unknown_scope_rejected(self, capsys):
        with pytest.raises(SystemExit):
            main(["gradcheck", "everything"])


class TestEval:
    def _write_perfect(self, path, n=12, k=3):
        y = np.arange(n) % k
        scores = np.zeros((n, k))
        scores[np.arange(n), y] = 1.0
        write_predictions_csv(path, y, y, scores)

    def test_perfect_predictions(self, capsys, tmp_path):
        path = tmp_path / "preds.csv"
        self._write_perfect(path)
        code, out, _ = run(capsys, "eval", str(path))
        assert code == 0
        for line in out.strip().splitlines():
            assert line.split()[-1] == "1.000000"

    def test_identical_pointsets_zero(self, capsys, tmp_path):
        pts = np.random.default_rng(0).normal(size=(30, 2))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_pointset_csv(a, pts)
        write_pointset_csv(b, pts)
        code, out, _ = run(capsys, "eval", "--seg", str(a), str(b))
        assert code == 0
        assert out.count("0.000000") == 2

    def test_degenerate_ttest_exit_two(self, capsys, tmp_path):
        path = tmp_path / "preds.csv"
        self._write_perfect(path)
        code, _, err = run(capsys, "eval", str(path), "--compare", str(path))
        assert code == 2
        assert "variance" in err

    def test_compare_reports_per_class(self, capsys, tmp_path):
        rng = np.random.default_rng(1)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        n, k = 20, 3
        y = rng.integers(0, k, n)
        write_predictions_csv(a, y, y, rng.uniform(size=(n, k)))
        write_predictions_csv(b, y, y, rng.uniform(size=(n, k)))
        code, out, _ = run(capsys, "eval", str(a), "--compare", str(b))
        assert code == 0
        assert sum("t-test class" in l for l in out.splitlines()) == 3

    def test_malformed_row_numbered(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("true_label,pred_label,score_0,score_1\n"
                        "0,0,0.5,0.5\n0,zero,0.5,0.5\n")
        code, _, err = run(capsys, "eval", str(path))
        assert code == 1
        assert "row 3" in err


class TestGen:
    def test_landmarks_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "gen", "landmarks", "--out", str(a), "--seed", "9")
        run(capsys, "gen", "landmarks", "--out", str(b), "--seed", "9")
        assert a.read_bytes() == b.read_bytes()

    def test_predictions_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "gen", "predictions", "--out", str(a), "--n", "30")
        run(capsys, "gen", "predictions", "--out", str(b), "--n", "30")
        assert a.read_bytes() == b.read_bytes()

    def test_generated_landmarks_fit(self, capsys, tmp_path):
        lm = tmp_path / "lm.csv"
        run(capsys, "gen", "landmarks", "--out", str(lm))
        code, out, _ = run(capsys, "fit", str(lm))
        assert code == 0
        assert "coefficients" in out


class TestDeterminism:
    def test_commands_byte_identical_across_runs(self, capsys, tmp_path):
        lm = tmp_path / "lm.csv"
        run(capsys, "gen", "landmarks", "--out", str(lm), "--seed", "3")
        preds = tmp_path / "p.csv"
        run(capsys, "gen", "predictions", "--out", str(preds), "--seed", "3")
        commands = [
            ("fit", str(lm), "--out", str(tmp_path / "c.json"),
             "--mask", str(tmp_path / "m.pgm")),
            ("cost", "--paper-rows", "viii", "--csv", str(tmp_path / "t.csv")),
            ("demo", "--golden"),
            ("eval", str(preds), "--csv", str(tmp_path / "e.csv")),
        ]
        for argv in commands:
            first = run(capsys, *argv)
            files_first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
            second = run(capsys, *argv)
            files_second = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
            assert first == second
            assert files_first == files_second


class TestThetaOverride:
    def test_demo_theta_override_runs(self, capsys):
        code, out, _ = run(capsys, "demo", "--theta", "8")
        assert code == 0
        assert "scores: [" in out

    def test_demo_bad_theta_exits_one(self, capsys):
        code, _, err = run(capsys, "demo", "--theta", "3")
        assert code == 1

    def test_golden_rejects_theta(self, capsys):
        code, _, err = run(capsys, "demo", "--theta", "8", "--golden")
        assert code == 1
        assert "golden" in err
