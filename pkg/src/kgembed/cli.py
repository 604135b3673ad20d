"""Command line interface: ``kge split | train | eval | bench``.

Machine-readable output (JSON documents) goes to stdout, diagnostics to
stderr. ``KGE_LOG`` sets the log level (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import MetricMismatchError, bench_compare, link_prediction
from .kg import (
    UnknownLabelError,
    build_filter,
    load_splits,
    load_triples,
    split_kg,
    write_triples,
)
from .models import init_model
from .sampling import make_sampler
from .training import AdamState, ConfigError, parse_config, resolve_config, train_epoch

log = logging.getLogger("kgembed")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad input from the user; reported without a traceback, exit code 2."""


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None


def _write_manifest(out_dir: Path, config: dict, seed: int, inputs, timings: dict) -> None:
    manifest = {
        "engine": "kgembed",
        "engine_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "timings_s": timings,
    }
    (out_dir / "manifest.json").write_text(_dump(manifest), encoding="utf-8")


# ---------------------------------------------------------------------------
# split


def cmd_split(args) -> int:
    timings = {}
    start = time.perf_counter()
    try:
        kg = load_triples(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
    timings["load"] = time.perf_counter() - start
    seed = args.seed if args.seed is not None else int(_read_config(args.config).get("seed", 0))

    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        parts = split_kg(kg, args.share_train, args.with_validation, seed)
    for w in caught:
        log.warning("%s", w.message)
    timings["split"] = time.perf_counter() - start

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = ("train", "valid", "test") if args.with_validation else ("train", "test")
    for name, part in zip(names, parts):
        write_triples(part, out / f"{name}.txt")
    if not args.with_validation and (out / "valid.txt").exists():
        log.warning("leaving stale %s in place", out / "valid.txt")

    train = parts[0]
    ents = len(np.union1d(train.heads, train.tails))
    rels = len(np.unique(train.relations))
    print(
        f"train covers {ents}/{kg.n_ent} entities and {rels}/{kg.n_rel} relations",
        file=sys.stderr,
    )
    doc = {name: part.n_facts for name, part in zip(names, parts)}
    doc.update(entities_in_train=ents, n_ent=kg.n_ent, relations_in_train=rels, n_rel=kg.n_rel)
    sys.stdout.write(_dump(doc))
    _write_manifest(
        out,
        {"share_train": args.share_train, "with_validation": args.with_validation},
        seed,
        [args.input],
        timings,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _check_pairing(config) -> None:
    translation = config.model.startswith("Trans")
    if translation != (config.loss == "margin"):
        log.warning(
            "%s is usually trained with the %s loss, not %s",
            config.model, "margin" if translation else "sigmoid", config.loss,
        )


def cmd_train(args) -> int:
    raw = _read_config(args.config)
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    config = resolve_config(raw, overrides)
    if config.train is None:
        raise ConfigError("train", "a training file is required")
    if config.out_dir is None:
        raise ConfigError("out_dir", "an output directory is required")
    _check_pairing(config)

    timings = {}
    start = time.perf_counter()
    paths = [p for p in (config.train, config.valid, config.test) if p is not None]
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"cannot read {p}")
    names = [k for k in ("train", "valid", "test") if getattr(config, k)]
    graphs = dict(zip(names, load_splits(paths)))
    train = graphs["train"]
    timings["load"] = time.perf_counter() - start

    shuffle_seq, sampler_seq = np.random.SeedSequence(config.seed).spawn(2)
    model = init_model(config.model, train.n_ent, train.n_rel, config.d, config.d_r, config.seed)
    sampler = make_sampler(config.sampler, train, sampler_seq)
    rng = np.random.default_rng(shuffle_seq)
    state = AdamState.for_model(model)
    known = build_filter(graphs.values())

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    eval_time = 0.0
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as log_file:
        for epoch in range(1, config.n_epochs + 1):
            loss = train_epoch(model, train, sampler, config, state, rng)
            entry = {"epoch": epoch, "loss": loss}
            if config.eval_every and epoch % config.eval_every == 0 and "valid" in graphs:
                t0 = time.perf_counter()
                metrics = link_prediction(
                    model, graphs["valid"], known, k_values=config.k_values, n_workers=args.threads
                )
                eval_time += time.perf_counter() - t0
                entry["valid"] = metrics.to_dict(timing=False)
                log.info("epoch %d loss %.6f valid mrr_filt %.4f", epoch, loss, metrics.mrr_filt)
            else:
                log.info("epoch %d loss %.6f", epoch, loss)
            log_file.write(json.dumps(entry, sort_keys=True) + "\n")
    timings["train"] = time.perf_counter() - start - eval_time
    timings["periodic_eval"] = eval_time

    save_checkpoint(out / "model.kge", model, train.ent_labels, train.rel_labels)
    doc = {}
    if "test" in graphs:
        start = time.perf_counter()
        metrics = link_prediction(model, graphs["test"], known, k_values=config.k_values, n_workers=args.threads)
        timings["test_eval"] = time.perf_counter() - start
        doc = metrics.to_dict(timing=False)
        (out / "metrics.json").write_text(_dump(doc), encoding="utf-8")
    _write_manifest(out, config.to_dict(), config.seed, paths, timings)
    sys.stdout.write(_dump(doc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / bench


def _load_eval_inputs(args):
    cfg = _read_config(args.config)
    test_path = args.test or cfg.get("test")
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    if not test_path:
        raise UsageError("--test is required")
    filter_paths = args.filter
    if filter_paths is None:
        filter_paths = [cfg[k] for k in ("train", "valid", "test") if cfg.get(k) not in (None, "", "none")]
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise UsageError(f"cannot read {args.checkpoint}: {exc.strerror}") from None
    graphs = []
    for path in [test_path, *filter_paths]:
        try:
            graphs.append(load_triples(path, ckpt.ent_dict, ckpt.rel_dict))
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        except UnknownLabelError as exc:
            raise UsageError(f"{path}: {exc} is not in the checkpoint dictionaries") from None
    test = graphs[0]
    # the test facts are always part of the filter
    known = build_filter(graphs)
    k_values = args.k or tuple(int(k) for k in cfg.get("k_values", "1 3 10").replace(",", " ").split())
    return ckpt.model, test, known, tuple(k_values)


def cmd_eval(args) -> int:
    model, test, known, k_values = _load_eval_inputs(args)
    metrics = link_prediction(model, test, known, args.batch_size, k_values, n_workers=args.threads)
    sys.stdout.write(_dump(metrics.to_dict(timing=not args.no_timing)))
    return EXIT_OK


def cmd_bench(args) -> int:
    model, test, known, k_values = _load_eval_inputs(args)
    looped, batched = bench_compare(
        model, test, known, args.batch_size, args.repeats, k_values, n_workers=args.threads
    )
    for report in (looped, batched):
        print(
            f"{report.mode:>8}: {report.mean_time_s:.4f} s mean over {len(report.times_s)} runs, "
            f"{report.facts_per_s:.1f} facts/s",
            file=sys.stderr,
        )
    print(f"speedup (looped / batched): {batched.speedup:.2f}x", file=sys.stderr)
    sys.stdout.write(_dump({"looped": looped.to_dict(), "batched": batched.to_dict(),
                            "speedup": batched.speedup}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="evaluation worker threads")
    common.add_argument("--config", default=None, help="key=value configuration file")

    parser = argparse.ArgumentParser(prog="kge", description="Knowledge graph embedding engine.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", parents=[common], help="split a triple file into train/valid/test")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--share-train", type=float, default=0.8)
    p.add_argument("--with-validation", action="store_true")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train a model from a config file")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (
        ("eval", cmd_eval, "link-prediction metrics of a checkpoint"),
        ("bench", cmd_bench, "time batched against looped evaluation"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--checkpoint")
        p.add_argument("--test")
        p.add_argument("--filter", nargs="*", default=None, metavar="PATH",
                       help="triple files of known facts for the filtered setting")
        p.add_argument("--batch-size", type=int, default=256)
        p.add_argument("--k", type=int, nargs="+", default=None, help="cutoffs for Hit@k")
        if name == "eval":
            p.add_argument("--no-timing", action="store_true", help="omit wall_time_s from the output")
        else:
            p.add_argument("--repeats", type=int, default=5)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("KGE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("kge: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"kge {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MetricMismatchError as exc:
        print(f"kge {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
