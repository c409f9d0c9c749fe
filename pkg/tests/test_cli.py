"""CLI wiring: every subcommand, error surfaces, determinism."""

import json
import math
import subprocess
import sys

import pytest

from amsp.cli import main
from amsp.detio import read_detections
from amsp.nms import DetBox


def run_cli(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def boxrow(x1, y1, x2, y2, score, cls=0, image=None):
    row = {"x1": x1, "y1": y1, "x2": x2, "y2": y2, "score": score, "class": cls}
    if image is not None:
        row["image"] = image
    return row


SIX_BOXES = [
    boxrow(0, 0, 10, 10, 0.95),          # kept
    boxrow(1, 1, 11, 11, 0.90),          # IoU 81/119 with the first: removed
    boxrow(20, 20, 30, 30, 0.80),        # kept
    boxrow(21, 21, 31, 31, 0.60),        # IoU 81/119 with the previous: removed
    boxrow(0, 0, 10, 10, 0.70, cls=1),   # kept (other class)
    boxrow(3, 3, 9, 9, 0.50, cls=1),     # IoU 0.36 <= 0.5: kept
]


class TestCmdNMS:
    def test_empty_input(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        src.write_text("")
        out = tmp_path / "out.jsonl"
        rc, stdout, _ = run_cli(capsys, "nms", "--input", str(src), "--output", str(out))
        assert rc == 0
        assert out.read_text() == ""
        report = json.loads(stdout)
        assert report["survivors"] == 0
        assert report["stats"]["decay_evals"] == 0

    def test_hand_traced_hard_fixture(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, SIX_BOXES)
        out = tmp_path / "out.jsonl"
        rc, stdout, _ = run_cli(
            capsys, "nms", "--input", str(src), "--output", str(out), "--variant", "hard"
        )
        assert rc == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert [(l["score"], l["class"]) for l in lines] == [
            (0.95, 0), (0.80, 0), (0.70, 1), (0.50, 1)]
        assert all(l["adjusted_score"] == l["score"] for l in lines)
        assert json.loads(stdout)["survivors"] == 4

    def test_hand_traced_similar_fixture(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, SIX_BOXES)
        out = tmp_path / "out.jsonl"
        rc, stdout, _ = run_cli(
            capsys, "nms", "--input", str(src), "--output", str(out), "--variant", "similar"
        )
        assert rc == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        # class 1's 0.5 box decays by exp(-0.36^2 / 0.5); everything else holds
        decayed = 0.5 * math.exp(-(0.36 ** 2) / 0.5)
        assert [l["score"] for l in lines] == [0.95, 0.80, 0.70, 0.50]
        assert lines[3]["adjusted_score"] == pytest.approx(decayed, rel=1e-12)
        stats = json.loads(stdout)["stats"]
        assert stats["hard_removals"] == 2
        assert stats["decay_evals"] == 3

    def test_degenerate_gate_matches_hard_output(self, tmp_path, capsys):
        from amsp.synthetic import dense_corpus

        src = tmp_path / "in.jsonl"
        write_jsonl(src, [boxrow(b.x1, b.y1, b.x2, b.y2, b.score) for b in dense_corpus(120, seed=3)])
        out_sim = tmp_path / "sim.jsonl"
        out_hard = tmp_path / "hard.jsonl"
        assert run_cli(capsys, "nms", "--input", str(src), "--output", str(out_sim),
                       "--variant", "nms-similar", "--ns", "1.0")[0] == 0
        assert run_cli(capsys, "nms", "--input", str(src), "--output", str(out_hard),
                       "--variant", "hard")[0] == 0
        assert out_sim.read_bytes() == out_hard.read_bytes()

    def test_image_grouping_preserved(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [
            boxrow(0, 0, 10, 10, 0.9, image="a"),
            boxrow(0, 0, 10, 10, 0.8, image="b"),  # same geometry, other image
        ])
        out = tmp_path / "out.jsonl"
        rc, _, _ = run_cli(capsys, "nms", "--input", str(src), "--output", str(out),
                           "--variant", "hard")
        assert rc == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert [l["image"] for l in lines] == ["a", "b"]

    def test_malformed_line_names_line_number(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        src.write_text('{"x1":0,"y1":0,"x2":1,"y2":1,"score":0.5,"class":0}\nnot json\n')
        out = tmp_path / "out.jsonl"
        rc, _, stderr = run_cli(capsys, "nms", "--input", str(src), "--output", str(out))
        assert rc == 1
        err = json.loads(stderr)
        assert "line 2" in err["error"]
        assert "\n" not in stderr.strip()

    def test_missing_file(self, tmp_path, capsys):
        rc, _, stderr = run_cli(capsys, "nms", "--input", str(tmp_path / "nope.jsonl"),
                                "--output", str(tmp_path / "o.jsonl"))
        assert rc == 1
        assert "error" in json.loads(stderr)


class TestCmdBlock:
    def test_params_reference_values(self, capsys):
        rc, stdout, _ = run_cli(capsys, "block", "params", "--c", "64", "--k", "3", "--g", "4")
        assert rc == 0
        report = json.loads(stdout)
        assert report["vconv_params"] == 19008
        assert report["standard_params"] == 36864

    def test_params_divisibility_error(self, capsys):
        rc, _, stderr = run_cli(capsys, "block", "params", "--c", "8", "--k", "3", "--g", "3")
        assert rc == 1
        assert "groups" in json.loads(stderr)["error"]

    def test_gradcheck_passes(self, capsys):
        rc, stdout, _ = run_cli(capsys, "block", "gradcheck", "--block", "amsp-vconv",
                                "--b", "2", "--c", "8")
        assert rc == 0
        report = json.loads(stdout)
        assert report["pass"] is True
        assert report["max_rel_error"] <= 1e-5

    def test_gradcheck_fad_csp(self, capsys):
        rc, stdout, _ = run_cli(capsys, "block", "gradcheck", "--block", "fad-csp",
                                "--b", "1", "--c", "8", "--h", "5", "--w", "5")
        assert rc == 0
        assert json.loads(stdout)["pass"] is True

    def test_forward_deterministic_output(self, tmp_path, capsys):
        out1, out2 = tmp_path / "a.amspt", tmp_path / "b.amspt"
        for out in (out1, out2):
            rc, _, _ = run_cli(capsys, "block", "forward", "--block", "amsp-vconv",
                               "--c", "8", "--seed", "11", "--output", str(out))
            assert rc == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_forward_weights_round_trip(self, tmp_path, capsys):
        wdir = tmp_path / "weights"
        out1, out2 = tmp_path / "a.amspt", tmp_path / "b.amspt"
        rc, _, _ = run_cli(capsys, "block", "forward", "--block", "fad-csp", "--c", "8",
                           "--seed", "5", "--output", str(out1), "--weights-out", str(wdir))
        assert rc == 0
        rc, _, _ = run_cli(capsys, "block", "forward", "--block", "fad-csp", "--c", "8",
                           "--seed", "5", "--output", str(out2), "--weights", str(wdir))
        assert rc == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_forward_reads_input_container(self, tmp_path, capsys):
        import numpy as np

        from amsp.tensor import Tensor
        from amsp.tensorio import write_tensor

        src = tmp_path / "x.amspt"
        write_tensor(src, Tensor(np.random.default_rng(0).standard_normal((1, 8, 4, 4))))
        rc, stdout, _ = run_cli(capsys, "block", "forward", "--block", "amsp-vconv",
                                "--c", "8", "--input", str(src))
        assert rc == 0
        assert json.loads(stdout)["output_shape"] == [1, 8, 4, 4]

    def test_forward_reads_json_fixture(self, tmp_path, capsys):
        import numpy as np

        from amsp.tensor import Tensor
        from amsp.tensorio import write_tensor_json

        src = tmp_path / "x.json"
        write_tensor_json(src, Tensor(np.ones((1, 8, 3, 3))))
        rc, stdout, _ = run_cli(capsys, "block", "forward", "--block", "amsp-vconv",
                                "--c", "8", "--input", str(src))
        assert rc == 0
        assert json.loads(stdout)["input_shape"] == [1, 8, 3, 3]

    def test_inconsistent_t_g_rejected(self, capsys):
        rc, _, stderr = run_cli(capsys, "block", "forward", "--c", "8", "--g", "2", "--t", "3")
        assert rc == 1
        assert "t:" in json.loads(stderr)["error"]


class TestCmdBench:
    def test_synthetic_zero_rejected(self, capsys):
        rc, _, stderr = run_cli(capsys, "bench", "--synthetic", "0", "--reps", "3")
        assert rc == 1
        assert "synthetic" in json.loads(stderr)["error"]

    def test_reps_below_three_rejected(self, capsys):
        rc, _, stderr = run_cli(capsys, "bench", "--synthetic", "50", "--reps", "2")
        assert rc == 1
        assert "reps" in json.loads(stderr)["error"]

    def test_report_structure(self, capsys):
        rc, stdout, _ = run_cli(capsys, "bench", "--synthetic", "300", "--reps", "3")
        assert rc == 0
        report = json.loads(stdout)
        assert set(report["variants"]) == {"hard", "similar", "soft"}
        assert report["ordering"]["economy_similar_le_soft"] is True
        for v in report["variants"].values():
            assert v["median_ms"] > 0

    def test_corpus_source_required(self, capsys):
        rc, _, stderr = run_cli(capsys, "bench", "--reps", "3")
        assert rc == 1
        assert "corpus" in json.loads(stderr)["error"]

    def test_corpus_from_jsonl_grouped_by_image(self, tmp_path, capsys):
        from amsp.synthetic import dense_corpus

        src = tmp_path / "corpus.jsonl"
        rows = []
        for image in ("a", "b"):
            for b in dense_corpus(60, seed=ord(image)):
                rows.append(boxrow(b.x1, b.y1, b.x2, b.y2, b.score, image=image))
        write_jsonl(src, rows)
        rc, stdout, _ = run_cli(capsys, "bench", "--input", str(src), "--reps", "3")
        assert rc == 0
        report = json.loads(stdout)
        assert report["corpus"]["images"] == 2
        assert report["variants"]["hard"]["survivors"] > 0


class TestCmdNoiseProbe:
    def test_report_and_determinism(self, tmp_path, capsys):
        args = ["noise-probe", "--b", "1", "--c", "8", "--h", "5", "--w", "5",
                "--levels", "0,1,3", "--seeds", "3", "--seed", "2"]
        rc, out1, _ = run_cli(capsys, *args)
        assert rc == 0
        rc, out2, _ = run_cli(capsys, *args)
        assert out1 == out2
        report = json.loads(out1)
        assert report["curves"]["amsp_vconv"][0] == 0.0
        assert report["curves"]["standard_conv"][0] == 0.0
        assert len(report["curves"]["amsp_vconv"]) == 3

    def test_negative_level_rejected(self, capsys):
        rc, _, stderr = run_cli(capsys, "noise-probe", "--c", "8", "--levels", "0,-1")
        assert rc == 1
        assert "levels" in json.loads(stderr)["error"]

    def test_output_file(self, tmp_path, capsys):
        out = tmp_path / "probe.json"
        rc, _, _ = run_cli(capsys, "noise-probe", "--b", "1", "--c", "8", "--h", "4",
                           "--w", "4", "--levels", "0,2", "--seeds", "2", "--output", str(out))
        assert rc == 0
        assert json.loads(out.read_text())["levels"] == [0.0, 2.0]


class TestCmdBenchKernels:
    def test_smoke(self, capsys, monkeypatch):
        import amsp.bench as bench_mod

        monkeypatch.setattr(bench_mod, "DEFAULT_SHAPES", ((1, 8, 6, 6),))
        rc, stdout, _ = run_cli(capsys, "bench-kernels", "--reps", "3")
        assert rc == 0
        report = json.loads(stdout)
        assert report["results"][0]["conv2d_ms"]


class TestUsageErrors:
    def test_unknown_variant(self, tmp_path, capsys):
        rc, _, stderr = run_cli(capsys, "nms", "--input", "x", "--output", "y",
                                "--variant", "matrix")
        assert rc == 2
        assert "error" in json.loads(stderr)

    def test_module_entry_point(self):
        out = subprocess.run(
            [sys.executable, "-m", "amsp", "block", "params", "--c", "64", "--k", "3", "--g", "4"],
            capture_output=True, text=True,
        )
        assert out.returncode == 0
        assert json.loads(out.stdout)["vconv_params"] == 19008


class TestRoundTripThroughDetIO:
    def test_adjusted_scores_parse_back(self, tmp_path, capsys):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, SIX_BOXES)
        out = tmp_path / "out.jsonl"
        run_cli(capsys, "nms", "--input", str(src), "--output", str(out), "--variant", "soft")
        rows = read_detections(out)
        assert all(isinstance(b, DetBox) for _, b in rows)
