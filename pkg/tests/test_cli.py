import json

import numpy as np
import pytest

from walkclip.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from walkclip.contrastive import read_head
from walkclip.datamodel import parse_dataset
from walkclip.safe import SafeConfig
from walkclip.spatial import build_index, radius_query

SMALL = ["--dims", "3,3,4"]


@pytest.fixture
def small_file(tmp_path):
    path = tmp_path / "d.txt"
    assert main(["synth", "-o", str(path), "--n", "120", "--seed", "1", *SMALL]) == EXIT_OK
    return path


def test_synth_then_validate(small_file, capsys):
    assert main(["validate", str(small_file)]) == EXIT_OK
    assert "OK, 120 records, dims=(3, 3, 4)" in capsys.readouterr().out
    stamp = json.loads(small_file.with_name(small_file.name + ".provenance.json").read_text())
    assert stamp["records"] == 120 and stamp["config"]["seed"] == 1


def test_synth_copies_and_determinism(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for p in (a, b):
        assert main(["synth", "-o", str(p), "--n", "40", "--copies", "2", *SMALL]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert len(parse_dataset(a)) == 120


def test_validate_reports_bad_score(small_file, capsys):
    lines = small_file.read_text().splitlines()
    fields = lines[5].split("|")
    fields[-1] = "105"
    lines[5] = "|".join(fields)
    small_file.write_text("\n".join(lines) + "\n")
    assert main(["validate", str(small_file)]) == EXIT_INVALID
    out = capsys.readouterr().out
    assert "line 6" in out and "INVALID, 1 problem(s)" in out


def test_validate_names_inconsistent_group(tmp_path, capsys):
    path = tmp_path / "g.txt"
    path.write_text(
        "dims=1,1,1\n"
        "a|grp7|44.9|-93.2|0|0|0|50\n"
        "b|grp7|44.95|-93.2|0|0|0|50\n"
    )
    assert main(["validate", str(path)]) == EXIT_INVALID
    out = capsys.readouterr().out
    assert "grp7" in out and "leakage" in out


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.txt")]) != EXIT_OK


def test_safe_isolated_points_unchanged(tmp_path):
    src = tmp_path / "iso.txt"
    rows = [f"r{i}|g{i}|{44 + i * 0.1}|-93|{i}.25,1|-{i},2.5|7|50" for i in range(5)]
    src.write_text("dims=2,2,1\n" + "\n".join(rows) + "\n")
    out = tmp_path / "iso_safe.txt"
    assert main(["safe", str(src), "-o", str(out)]) == EXIT_OK
    a, b = parse_dataset(src), parse_dataset(out)
    for m in ("sat", "street", "pdfm"):
        np.testing.assert_allclose(b.matrix(m), a.matrix(m), rtol=0, atol=1e-15)


def test_safe_dense_cluster(small_file, tmp_path):
    out1, out2 = tmp_path / "s1.txt", tmp_path / "s2.txt"
    assert main(["safe", str(small_file), "-o", str(out1)]) == EXIT_OK
    assert main(["safe", str(small_file), "-o", str(out2)]) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()
    a, b = parse_dataset(small_file), parse_dataset(out1)
    assert not np.array_equal(a.matrix("sat"), b.matrix("sat"))
    np.testing.assert_array_equal(a.matrix("pdfm"), b.matrix("pdfm"))
    idx = build_index(a.coords(), SafeConfig().radius)
    f, g = a.matrix("street"), b.matrix("street")
    for i in range(len(a)):
        members = f[[i, *radius_query(idx, i, SafeConfig().radius)]]
        # the file stores repr floats, so parsing is exact; keep a hair of slack
        assert np.all(g[i] >= members.min(0) - 1e-9) and np.all(g[i] <= members.max(0) + 1e-9)


def test_split_subcommand(small_file, tmp_path, capsys):
    out = tmp_path / "plan.txt"
    assert main(["split", str(small_file), "-o", str(out), "--seed", "4"]) == EXIT_OK
    assert out.read_text().startswith("seed=4\n")
    assert "test groups: 18" in capsys.readouterr().out


def test_pretrain_synthetic(tmp_path, capsys):
    out = tmp_path / "head.txt"
    args = ["pretrain", "--synthetic", "64", "--synthetic-dim", "8", "--proj-dim", "8",
            "--epochs", "5", "--batch-size", "16", "--lr", "0.05", "-o", str(out)]
    assert main(args) == EXIT_OK
    head = read_head(out)
    assert head.image_proj.shape == (8, 8)
    assert "->" in capsys.readouterr().out


def test_pretrain_from_pair_file(tmp_path):
    pairs = tmp_path / "pairs.txt"
    head = tmp_path / "h.txt"
    assert main(["pretrain", "--synthetic", "20", "--synthetic-dim", "4", "--write-pairs", str(pairs),
                 "--epochs", "1", "--batch-size", "10", "-o", str(tmp_path / "unused.txt")]) == EXIT_OK
    assert main(["pretrain", "--pairs", str(pairs), "--epochs", "2", "--batch-size", "10",
                 "--proj-dim", "3", "--symmetric", "-o", str(head)]) == EXIT_OK
    assert read_head(head).symmetric


def _run_args(dataset, out, *extra):
    return ["run", "--dataset", str(dataset), "--out", str(out), "--no-grid", "--epochs", "5", *extra]


def test_run_is_deterministic(small_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(_run_args(small_file, d, "--rows", "vision,walkclip", "--seed", "3")) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert "manifest.json" in names and "split_plan.txt" in names
    for name in names:
        if name.startswith(("eval_", "predictions_", "model_", "split_")):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ra, rb = (json.loads((d / "report.json").read_text()) for d in (a, b))
    for r in (ra, rb):
        r.pop("timings")
        r["config"].pop("output_dir")
    assert ra == rb
    assert ra["safe_scope"] == "inductive" and ra["config"]["seed"] == 3


def test_run_pdfm_only_row(small_file, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dataset": str(small_file), "output_dir": str(tmp_path / "o"),
        "use_sat": False, "use_street": False, "use_pdfm": True, "use_safe": False,
        "grid": None, "train": {"epochs": 3, "hidden": [8]},
    }))
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    (row,) = rep["rows"]
    assert row["fusion_dims"] == [0, 0, 4]
    assert set(row["eval"]) >= {"r2", "rmse", "swd"}


def test_run_with_grid_records_cells(small_file, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dataset": str(small_file), "output_dir": str(tmp_path / "o"), "rows": ["pdfm"],
        "grid": {"learning_rates": [1e-3], "dropout_rates": [0.3, 0.5], "weight_decays": [1e-4]},
        "train": {"epochs": 2, "hidden": [8]},
    }))
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    g = rep["rows"][0]["grid"]
    assert g["n_fits"] == 10 and len(g["cells"]) == 2


def test_run_exit_codes(small_file, tmp_path):
    assert main(["run", "--out", str(tmp_path / "x")]) == EXIT_INVALID
    assert main(_run_args(small_file, tmp_path / "x", "--rows", "nonsense")) == EXIT_INVALID
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"dataset": "d", "output_dir": "o", "bogus": 1}))
    assert main(["run", "--config", str(cfg)]) == EXIT_INVALID
    assert main(_run_args(tmp_path / "missing.txt", tmp_path / "x")) == EXIT_RUNTIME


def test_eval_subcommand(small_file, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(_run_args(small_file, out, "--rows", "pdfm")) == EXIT_OK
    capsys.readouterr()
    assert main(["eval", str(out / "predictions_pdfm.csv"), "--seed", "0"]) == EXIT_OK
    printed = capsys.readouterr().out
    assert printed == (out / "eval_pdfm.txt").read_text()
