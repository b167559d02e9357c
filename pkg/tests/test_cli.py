import json
import time
from pathlib import Path

import pytest
import yaml

from varsets.cli import main
from varsets.pipeline import ConfigError, run_pipeline, validate_config

from conftest import FIXTURES


def write_corpus(root: Path, n_files: int = 6, utts_per_file: int = 500) -> Path:
    """Synthetic CHAT corpus: unrelated caregiver utterances."""
    corpus = root / "cha"
    corpus.mkdir(parents=True, exist_ok=True)
    k = 0
    for f in range(n_files):
        lines = ["@UTF8", "@Begin", "@Participants:\tMOT Mother, CHI Target_Child"]
        for _ in range(utts_per_file):
            lines.append(f"*MOT:\tthe u{k}a u{k}b u{k}c .")
            if k % 7 == 0:
                lines.append("*CHI:\tbaba .")
            k += 1
        lines.append("@End")
        (corpus / f"file{f:02d}.cha").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return corpus


def grid_config(root: Path, corpus: Path, name: str = "config", **overrides) -> Path:
    cfg = {
        "corpus_dir": str(corpus),
        "word_budget": 10_000,
        "ratios": [0, 20, 40, 60, 80, 100],
        "conditions": ["consecutive", "shuffled"],
        "methods": ["sequential_concat", "adjacent_batch"],
        "batch_size": 8,
        "seed": 4242,
        "strict_leakage": True,
        "out_dir": str(root / "out"),
        "jobs": 1,
    }
    cfg.update(overrides)
    path = root / f"{name}.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


class TestSubcommands:
    def test_full_subcommand_chain(self, tmp_path, capsys):
        corpus = write_corpus(tmp_path)
        records = tmp_path / "records.jsonl"
        assert main(["ingest", "--corpus-dir", str(corpus), "--out", str(records),
                     "--min-words", "3"]) == 0
        sets = tmp_path / "synth.jsonl"
        assert main(["synth", "--records", str(records), "--out", str(sets),
                     "--seed", "9", "--target-words", "5000"]) == 0
        dataset = tmp_path / "dataset.jsonl"
        assert main(["compose", "--filler", str(records), "--synth", str(sets),
                     "--ratio", "40", "--budget", "10000", "--seed", "3",
                     "--strict-leakage", "--out", str(dataset)]) == 0
        schedule = tmp_path / "sched.jsonl"
        assert main(["schedule", "--dataset", str(dataset), "--method", "adjacent_batch",
                     "--batch-size", "4", "--out", str(schedule)]) == 0
        assert main(["verify", "--schedule", str(schedule), "--dataset", str(dataset)]) == 0
        out = capsys.readouterr().out
        assert "ok" in out

    def test_detect_subcommand(self, tmp_path):
        records = tmp_path / "records.jsonl"
        assert main(["ingest", "--corpus-dir", str(FIXTURES), "--out", str(records)]) == 0
        sets = tmp_path / "sets.jsonl"
        assert main(["detect", "--records", str(records), "--out", str(sets),
                     "--jaccard-min", "0.33"]) == 0
        found = [json.loads(line) for line in sets.read_text().splitlines()]
        assert found and all("members" in rec for rec in found)

    def test_verify_mismatched_method_fails(self, tmp_path):
        corpus = write_corpus(tmp_path, n_files=1, utts_per_file=500)
        records = tmp_path / "records.jsonl"
        main(["ingest", "--corpus-dir", str(corpus), "--out", str(records), "--min-words", "3"])
        sets = tmp_path / "synth.jsonl"
        main(["synth", "--records", str(records), "--out", str(sets), "--seed", "1",
              "--target-words", "600"])
        dataset = tmp_path / "dataset.jsonl"
        main(["compose", "--filler", str(records), "--synth", str(sets), "--ratio", "20",
              "--budget", "1500", "--seed", "2", "--out", str(dataset)])
        schedule = tmp_path / "sched.jsonl"
        main(["schedule", "--dataset", str(dataset), "--method", "sequential_concat",
              "--batch-size", "4", "--out", str(schedule)])
        rc = main(["verify", "--schedule", str(schedule), "--dataset", str(dataset),
                   "--method", "adjacent_batch"])
        assert rc == 1

    def test_stats_exact_counts(self, tmp_path, capsys):
        records = tmp_path / "records.jsonl"
        main(["ingest", "--corpus-dir", str(FIXTURES), "--out", str(records),
              "--keep-tiers", "MOT"])
        json_out = tmp_path / "stats.json"
        assert main(["stats", "--path", str(records), "--json", str(json_out)]) == 0
        report = json.loads(json_out.read_text())
        # straw.cha MOT: 4 utterances (1 fragment "uh oh."), animals.cha MOT: 7
        # animals.cha MOT: 6+12+5+1+7+2+3 words; straw.cha MOT: 3+3+2+3
        assert report["kind"] == "corpus"
        assert report["total_words"] == 47
        assert report["fragment_ratio"] == pytest.approx(3 / 11)

    def test_stats_missing_path_errors(self, tmp_path):
        assert main(["stats", "--path", str(tmp_path / "nope.jsonl")]) == 1

    def test_ingest_empty_dir_errors(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(["ingest", "--corpus-dir", str(empty), "--out", str(tmp_path / "x.jsonl")])
        assert rc == 1
        assert not (tmp_path / "x.jsonl").exists()


class TestRunGrid:
    def test_single_ratio_smoke_under_five_seconds(self, tmp_path):
        corpus = write_corpus(tmp_path, n_files=1, utts_per_file=200)
        config = grid_config(
            tmp_path, corpus, ratios=[0], conditions=["consecutive"], word_budget=400
        )
        t0 = time.monotonic()
        assert main(["run", "--config", str(config)]) == 0
        elapsed = time.monotonic() - t0
        assert elapsed < 5.0
        out = tmp_path / "out"
        assert len(list((out / "schedules").glob("*.jsonl"))) == 2
        assert len(list((out / "datasets").glob("*.jsonl"))) == 1

    def test_full_grid_artifact_counts(self, tmp_path):
        corpus = write_corpus(tmp_path)
        config = grid_config(tmp_path, corpus)
        assert main(["run", "--config", str(config)]) == 0
        out = tmp_path / "out"
        manifest = json.loads((out / "run_manifest.json").read_text())
        datasets = [a for a in manifest["artifacts"] if a["kind"] == "dataset"]
        schedules = [a for a in manifest["artifacts"] if a["kind"] == "schedule"]
        assert len(datasets) == 12
        assert len(schedules) == 24
        assert len(list((out / "datasets").glob("*.jsonl"))) == 12
        assert len(list((out / "schedules").glob("*.jsonl"))) == 24
        # every artifact digest is recorded exactly once
        digests = [a["digest"] for a in manifest["artifacts"]]
        assert len(digests) == len(set(digests))
        for artifact in manifest["artifacts"]:
            assert (out / artifact["path"]).exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        corpus = write_corpus(tmp_path)
        cfg_a = grid_config(tmp_path, corpus, name="cfg_a", ratios=[0, 40],
                            out_dir=str(tmp_path / "a"))
        cfg_b = grid_config(tmp_path, corpus, name="cfg_b", ratios=[0, 40],
                            out_dir=str(tmp_path / "b"))
        assert main(["run", "--config", str(cfg_a)]) == 0
        assert main(["run", "--config", str(cfg_b)]) == 0
        a_files = sorted((tmp_path / "a").rglob("*.jsonl"))
        b_files = sorted((tmp_path / "b").rglob("*.jsonl"))
        assert [p.name for p in a_files] == [p.name for p in b_files]
        for pa, pb in zip(a_files, b_files):
            assert pa.read_bytes() == pb.read_bytes(), pa.name

    def test_jobs_do_not_change_artifacts(self, tmp_path):
        corpus = write_corpus(tmp_path)
        cfg_serial = grid_config(tmp_path, corpus, name="cfg_serial", ratios=[0, 40],
                                 jobs=1, out_dir=str(tmp_path / "serial"))
        cfg_par = grid_config(tmp_path, corpus, name="cfg_par", ratios=[0, 40],
                              jobs=2, out_dir=str(tmp_path / "par"))
        assert main(["run", "--config", str(cfg_serial)]) == 0
        assert main(["run", "--config", str(cfg_par)]) == 0
        for pa in sorted((tmp_path / "serial").rglob("*.jsonl")):
            pb = tmp_path / "par" / pa.relative_to(tmp_path / "serial")
            assert pa.read_bytes() == pb.read_bytes()

    def test_unknown_config_key_rejected(self, tmp_path):
        corpus = write_corpus(tmp_path, n_files=1, utts_per_file=50)
        config = grid_config(tmp_path, corpus)
        raw = yaml.safe_load(config.read_text())
        raw["wordbudget"] = 10
        with pytest.raises(ConfigError, match="wordbudget"):
            validate_config(raw)
        config.write_text(yaml.safe_dump(raw), encoding="utf-8")
        assert main(["run", "--config", str(config)]) == 1

    def test_failed_run_removes_partial_outputs(self, tmp_path):
        corpus = write_corpus(tmp_path, n_files=1, utts_per_file=30)
        # budget far beyond the corpus -> compose fails after ingest artifacts
        config = grid_config(tmp_path, corpus, word_budget=50_000, ratios=[0],
                             conditions=["consecutive"])
        assert main(["run", "--config", str(config)]) == 1
        out = tmp_path / "out"
        assert not (out / "run_manifest.json").exists()
        assert not list(out.rglob("*.jsonl"))

    def test_ingest_cache_used(self, tmp_path, monkeypatch):
        cache = tmp_path / "cache"
        monkeypatch.setenv("VARSETS_CACHE_DIR", str(cache))
        corpus = write_corpus(tmp_path, n_files=1, utts_per_file=150)
        cfg_a = grid_config(tmp_path, corpus, name="cfg_a", ratios=[0],
                            conditions=["consecutive"], word_budget=400,
                            out_dir=str(tmp_path / "a"))
        cfg_b = grid_config(tmp_path, corpus, name="cfg_b", ratios=[0],
                            conditions=["consecutive"], word_budget=400,
                            out_dir=str(tmp_path / "b"))
        assert main(["run", "--config", str(cfg_a)]) == 0
        cache_files = list(cache.glob("ingest-*.jsonl"))
        assert len(cache_files) == 1
        assert main(["run", "--config", str(cfg_b)]) == 0
        assert len(list(cache.glob("ingest-*.jsonl"))) == 1
        assert (tmp_path / "a" / "corpus" / "filler.jsonl").read_bytes() == (
            tmp_path / "b" / "corpus" / "filler.jsonl"
        ).read_bytes()
