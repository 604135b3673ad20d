import json

import numpy as np
import pytest

from kgembed.checkpoint import load_checkpoint
from kgembed.cli import main
from kgembed.kg import KnowledgeGraph, format_triples, load_triples

from oracles import random_graph


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(0)
    kg = KnowledgeGraph.from_indices(random_graph(rng, 30, 3, 150), 30, 3)
    path = tmp_path / "all.txt"
    path.write_text(format_triples(kg))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def split_dir(tmp_path, dataset, capsys):
    out = tmp_path / "split"
    code, _, _ = run(capsys, "split", dataset, out, "--with-validation", "--seed", 3)
    assert code == 0
    return out


def write_config(tmp_path, split_dir, **extra):
    keys = {
        "model": "TransE", "preset": "paper-table1", "d": 8, "n_epochs": 3,
        "train": split_dir / "train.txt", "valid": split_dir / "valid.txt", "test": split_dir / "test.txt",
    }
    keys.update(extra)
    path = tmp_path / "run.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in keys.items()))
    return path


def test_split_partitions_input(tmp_path, dataset, capsys):
    code, out, err = run(capsys, "split", dataset, tmp_path / "s", "--share-train", 0.7)
    assert code == 0 and "covers" in err
    doc = json.loads(out)
    assert not (tmp_path / "s" / "valid.txt").exists()
    parts = [(tmp_path / "s" / f"{n}.txt").read_text().splitlines() for n in ("train", "test")]
    assert sorted(parts[0] + parts[1]) == sorted(dataset.read_text().splitlines())
    assert doc["train"] == len(parts[0]) and doc["entities_in_train"] == doc["n_ent"]
    assert (tmp_path / "s" / "manifest.json").exists()


def test_split_missing_input(tmp_path, capsys):
    code, _, err = run(capsys, "split", tmp_path / "nope.txt", tmp_path / "s")
    assert code == 2 and "nope.txt" in err


def test_train_writes_outputs_and_checkpoint(tmp_path, split_dir, capsys):
    cfg = write_config(tmp_path, split_dir, eval_every=2)
    code, out, _ = run(capsys, "train", "--config", cfg, "--out-dir", tmp_path / "run")
    assert code == 0
    run_dir = tmp_path / "run"
    log = [json.loads(line) for line in (run_dir / "train_log.jsonl").read_text().splitlines()]
    assert [e["epoch"] for e in log] == [1, 2, 3]
    assert "valid" in log[1] and "valid" not in log[0]
    assert json.loads(out) == json.loads((run_dir / "metrics.json").read_text())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config"]["model"] == "TransE"
    assert len(manifest["inputs"]) == 3
    ckpt = load_checkpoint(run_dir / "model.kge")
    train = load_triples(split_dir / "train.txt")
    assert ckpt.model.n_ent == 30 and set(ckpt.ent_dict) >= set(train.ent_dict)


def test_eval_every_zero_skips_validation(tmp_path, split_dir, capsys):
    cfg = write_config(tmp_path, split_dir, eval_every=0)
    assert run(capsys, "train", "--config", cfg, "--out-dir", tmp_path / "run")[0] == 0
    for line in (tmp_path / "run" / "train_log.jsonl").read_text().splitlines():
        assert "valid" not in json.loads(line)


def test_two_train_runs_identical_logs(tmp_path, split_dir, capsys):
    cfg = write_config(tmp_path, split_dir)
    for name in ("a", "b"):
        assert run(capsys, "train", "--config", cfg, "--out-dir", tmp_path / name, "--seed", 5)[0] == 0
    for f in ("train_log.jsonl", "metrics.json", "model.kge"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_set_overrides_config(tmp_path, split_dir, capsys):
    cfg = write_config(tmp_path, split_dir)
    run(capsys, "train", "--config", cfg, "--out-dir", tmp_path / "r", "--set", "n_epochs=1")
    assert len((tmp_path / "r" / "train_log.jsonl").read_text().splitlines()) == 1


def test_unknown_config_key_is_named(tmp_path, split_dir, capsys):
    cfg = write_config(tmp_path, split_dir, learning_rate=0.1)
    code, _, err = run(capsys, "train", "--config", cfg, "--out-dir", tmp_path / "r")
    assert code == 2 and "learning_rate" in err


@pytest.fixture
def trained(tmp_path, split_dir, capsys):
    cfg = write_config(tmp_path, split_dir)
    assert run(capsys, "train", "--config", cfg, "--out-dir", tmp_path / "run")[0] == 0
    return cfg, tmp_path / "run" / "model.kge"


def test_eval_schema(trained, capsys):
    cfg, ckpt = trained
    code, out, _ = run(capsys, "eval", "--config", cfg, "--checkpoint", ckpt, "--k", 1, 5)
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"n_facts", "k_values", "combined", "head", "tail", "wall_time_s"}
    assert doc["k_values"] == [1, 5]
    for side in ("combined", "head", "tail"):
        assert doc[side]["mrr_filt"] >= doc[side]["mrr_raw"]
        assert doc[side]["hits_filt.1"] <= doc[side]["hits_filt.5"]


def test_eval_matches_training_metrics(trained, tmp_path, capsys):
    cfg, ckpt = trained
    _, out, _ = run(capsys, "eval", "--config", cfg, "--checkpoint", ckpt, "--no-timing")
    assert out == (tmp_path / "run" / "metrics.json").read_text()


def test_eval_unknown_label(trained, tmp_path, capsys):
    _, ckpt = trained
    bad = tmp_path / "bad.txt"
    bad.write_text("e0\tr0\tmystery\n")
    code, _, err = run(capsys, "eval", "--checkpoint", ckpt, "--test", bad, "--filter")
    assert code != 0 and "mystery" in err


def test_bench_reports_speedup(trained, capsys):
    cfg, ckpt = trained
    code, out, err = run(capsys, "bench", "--config", cfg, "--checkpoint", ckpt, "--repeats", 1)
    assert code == 0 and "speedup" in err
    doc = json.loads(out)
    assert doc["speedup"] > 0 and doc["batched"]["repeats"] == 1


def test_bad_threads(capsys, trained):
    cfg, ckpt = trained
    assert run(capsys, "eval", "--config", cfg, "--checkpoint", ckpt, "--threads", 0)[0] == 2
