import json
from pathlib import Path

import pytest

from ticktack.cli import main

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestConvert:
    def test_known_term(self, capsys):
        code, out, _ = run(capsys, "convert", "1864")
        assert code == 0
        assert "Jiazi" in out

    def test_paired_years_share_angle(self, capsys):
        code, out, _ = run(capsys, "convert", "1965", "2025")
        assert code == 0
        rows = [line.split("\t") for line in out.strip().splitlines()[1:]]
        assert len(rows) == 2
        theta = {row[3] for row in rows}
        assert len(theta) == 1
        assert float(rows[1][4]) > float(rows[0][4])

    def test_year_zero_fails(self, capsys):
        code, _, err = run(capsys, "convert", "0")
        assert code == 1
        assert "no year zero" in err

    def test_bce_suffix_argument(self, capsys):
        code, out, _ = run(capsys, "convert", "75000BCE")
        assert code == 0
        assert out.splitlines()[1].startswith("-75000\t")

    def test_out_of_range(self, capsys):
        code, _, err = run(capsys, "convert", "99999")
        assert code == 1 and "range" in err

    def test_unparsable(self, capsys):
        code, _, err = run(capsys, "convert", "late-bronze-age")
        assert code == 1


class TestEncode:
    def test_json_lines(self, capsys):
        code, out, _ = run(capsys, "encode", "1965", "--dim", "8")
        assert code == 0
        rec = json.loads(out.strip())
        assert rec["year"] == 1965 and rec["cycle_index"] == 42
        assert len(rec["te_x"]) == 8 and len(rec["te_y"]) == 8
        assert all(-1.0 <= v <= 1.0 for v in rec["te_x"] + rec["te_y"])


class TestProfile:
    def test_golden_gregorian(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "profile", str(DATA / "corpus_longtail.jsonl"),
            "--view", "gregorian", "--bin-width", "200", "--out", str(tmp_path),
        )
        assert code == 0
        got = (tmp_path / "histogram_gregorian.csv").read_bytes()
        assert got == (DATA / "golden_gregorian_200.csv").read_bytes()
        metrics = json.loads((tmp_path / "metrics_gregorian.json").read_text())
        assert metrics["total"] == 522

    def test_views_agree_on_total(self, capsys, tmp_path):
        corpus = str(DATA / "corpus_longtail.jsonl")
        run(capsys, "profile", corpus, "--view", "gregorian", "--out", str(tmp_path))
        run(capsys, "profile", corpus, "--view", "sexagenary", "--out", str(tmp_path))
        g = json.loads((tmp_path / "metrics_gregorian.json").read_text())
        s = json.loads((tmp_path / "metrics_sexagenary.json").read_text())
        assert g["total"] == s["total"] > 0

    def test_empty_corpus_warns_not_crashes(self, capsys, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("", encoding="utf-8")
        code, _, err = run(capsys, "profile", str(empty), "--out", str(tmp_path / "o"))
        assert code == 0
        assert "warning" in err.lower()
        metrics = json.loads((tmp_path / "o" / "metrics_gregorian.json").read_text())
        assert metrics["total"] == 0 and metrics["normalized_entropy"] is None

    def test_missing_corpus_no_partial_artifacts(self, capsys, tmp_path):
        out = tmp_path / "o"
        code, _, err = run(capsys, "profile", str(tmp_path / "absent.jsonl"),
                           "--out", str(out))
        assert code == 1
        assert not out.exists()

    def test_config_written(self, capsys, tmp_path):
        run(capsys, "profile", str(DATA / "corpus_longtail.jsonl"), "--out", str(tmp_path))
        assert (tmp_path / "config.ini").exists()


class TestGenTasks:
    def test_outputs(self, capsys, tmp_path):
        code, out, _ = run(capsys, "gen-tasks", "--seed", "3", "--n-items", "30",
                           "--out", str(tmp_path))
        assert code == 0
        items = (tmp_path / "items.jsonl").read_text().splitlines()
        assert len(items) == 30
        assert (tmp_path / "corpus.jsonl").exists()
        assert (tmp_path / "fewshot.jsonl").exists()

    def test_deterministic(self, capsys, tmp_path):
        run(capsys, "gen-tasks", "--seed", "3", "--n-items", "20", "--out", str(tmp_path / "a"))
        run(capsys, "gen-tasks", "--seed", "3", "--n-items", "20", "--out", str(tmp_path / "b"))
        for name in ("items.jsonl", "corpus.jsonl", "fewshot.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestTicktackOutEnv:
    def test_relative_out_rerooted(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv("TICKTACK_OUT", str(tmp_path))
        monkeypatch.chdir(tmp_path)
        code, _, _ = run(capsys, "gen-tasks", "--seed", "1", "--n-items", "5",
                         "--out", "nested/run")
        assert code == 0
        assert (tmp_path / "nested" / "run" / "items.jsonl").exists()


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    """One tiny end-to-end pipeline shared by the training/eval CLI tests."""
    root = tmp_path_factory.mktemp("pipeline")
    capsys = None
    assert main(["gen-tasks", "--seed", "5", "--n-items", "40",
                 "--year-min", "-75000", "--year-max", "2025",
                 "--out", str(root / "tasks")]) == 0
    corpus = str(root / "tasks" / "corpus.jsonl")
    common = ["--dim", "16", "--n-layers", "1", "--n-heads", "2",
              "--max-seq-len", "96", "--seed", "0"]
    assert main(["fisher", "--corpus", corpus, "--samples", "4",
                 "--out", str(root / "fisher")] + common) == 0
    assert main(["train", "--corpus", corpus, "--mode", "ticktack",
                 "--fisher", str(root / "fisher" / "fisher.tkck"),
                 "--epochs", "1", "--out", str(root / "tick")] + common) == 0
    assert main(["train", "--corpus", corpus, "--mode", "pt",
                 "--epochs", "1", "--out", str(root / "pt")] + common) == 0
    return root


class TestTrainEvalPipeline:
    def test_artifacts_exist(self, experiment):
        for run_dir in ("tick", "pt"):
            assert (experiment / run_dir / "checkpoint.tkck").exists()
            assert (experiment / run_dir / "metrics.csv").exists()
            assert (experiment / run_dir / "config.ini").exists()

    def test_metrics_header(self, experiment):
        header = (experiment / "tick" / "metrics.csv").read_text().splitlines()[0]
        assert header == "epoch,l_ntp,l_intra,l_inter,ewc_penalty,l_final"

    def test_pt_metrics_temporal_terms_zero(self, experiment):
        line = (experiment / "pt" / "metrics.csv").read_text().splitlines()[1]
        _, l_ntp, l_intra, l_inter, pen, l_final = line.split(",")
        assert float(l_intra) == float(l_inter) == float(pen) == 0.0
        assert l_ntp == l_final

    def test_train_requires_fisher_for_full_objective(self, experiment, capsys, tmp_path):
        corpus = str(experiment / "tasks" / "corpus.jsonl")
        code, _, err = run(capsys, "train", "--corpus", corpus, "--mode", "ticktack",
                           "--epochs", "1", "--out", str(tmp_path / "x"))
        assert code == 1 and "fisher" in err.lower()

    def test_eval_both_shots(self, experiment, capsys, tmp_path):
        for shots in ("0", "5"):
            out = tmp_path / f"eval{shots}"
            code, _, _ = run(capsys, "eval",
                             "--checkpoint", str(experiment / "tick" / "checkpoint.tkck"),
                             "--items", str(experiment / "tasks" / "items.jsonl"),
                             "--fewshot", str(experiment / "tasks" / "fewshot.jsonl"),
                             "--shots", shots, "--out", str(out))
            assert code == 0
            report = json.loads((out / "report.json").read_text())
            assert report["shots"] == int(shots)
            assert report["total"] == 40
            assert (out / "buckets.csv").exists()

    def test_eval_exports(self, experiment, capsys, tmp_path):
        out = tmp_path / "export"
        code, _, _ = run(capsys, "eval",
                         "--checkpoint", str(experiment / "pt" / "checkpoint.tkck"),
                         "--items", str(experiment / "tasks" / "items.jsonl"),
                         "--export-embeddings", "--similarity-years", "2010:2013",
                         "--out", str(out))
        assert code == 0
        emb_lines = (out / "embeddings.csv").read_text().splitlines()
        assert emb_lines[0].startswith("year,class,e0")
        assert len(emb_lines) == 41
        sim_lines = (out / "similarity.csv").read_text().splitlines()
        assert sim_lines[0] == "year,2010,2011,2012,2013"

    def test_missing_checkpoint(self, experiment, capsys, tmp_path):
        code, _, err = run(capsys, "eval", "--checkpoint", str(tmp_path / "nope.tkck"),
                           "--items", str(experiment / "tasks" / "items.jsonl"),
                           "--out", str(tmp_path / "o"))
        assert code == 1


class TestUsageErrors:
    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--corpus", "x"])
        assert exc.value.code == 2
