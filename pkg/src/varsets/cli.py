"""Command-line interface.

Subcommands: ingest, detect, synth, compose, schedule, verify, stats, run.
The `run` subcommand drives the full grid from one declarative YAML config;
its flags override config keys.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .chat_ingest import filter_short, ingest_dir, read_utterances, select_budget, write_utterances
from .composer import (
    CompositionConfig,
    compose_dataset,
    compose_dataset_strict,
    read_dataset,
    write_dataset,
)
from .pipeline import detection_config, run_pipeline, stats_report, synth_config
from .scheduler import (
    METHOD_ADJACENT,
    METHOD_CONCAT,
    METHODS,
    read_schedule,
    schedule_adjacent_batch,
    schedule_sequential_concat,
    verify_schedule,
    write_schedule,
)
from .util import derive_seed
from .vs_detect import detect_variation_sets, read_sets, write_sets
from .vs_synth import synthesize_pool

log = logging.getLogger(__name__)


def _add_detect_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--anchor-min", type=int, default=2, dest="anchor_min_shared")
    parser.add_argument("--jaccard-min", type=float, default=0.33)
    parser.add_argument("--max-gap", type=int, default=1)
    parser.add_argument("--min-set-size", type=int, default=2)
    parser.add_argument("--stopwords", type=str, default=None, metavar="FILE")
    parser.add_argument("--any-speaker", action="store_true", help="link across speaker tiers")


def _detect_cfg(args: argparse.Namespace):
    return detection_config(
        {
            "anchor_min_shared": args.anchor_min_shared,
            "jaccard_min": args.jaccard_min,
            "max_gap": args.max_gap,
            "min_set_size": args.min_set_size,
            "stopwords": args.stopwords,
            "match_speaker": not args.any_speaker,
        }
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varsets",
        description="Deterministic corpus engineering for variation-set training curricula.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse CHAT files into cleaned utterance records")
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep-tiers", type=str, default=None, help="comma-separated tier codes")
    p.add_argument("--min-words", type=int, default=0, help="drop shorter utterances (0 keeps all)")
    p.add_argument("--budget", type=int, default=0, help="word budget (0 keeps everything)")

    p = sub.add_parser("detect", help="detect natural variation sets in utterance records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    _add_detect_flags(p)

    p = sub.add_parser("synth", help="generate synthetic variation sets from seed utterances")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-variants", type=int, default=5)
    p.add_argument("--question-ratio", type=float, default=0.48)
    p.add_argument("--max-ops", type=int, default=2)
    p.add_argument("--lexicon", type=str, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-words", type=int, default=0, help="cycle sources until this many words")

    p = sub.add_parser("compose", help="compose a dataset at a fixed variation-set ratio")
    p.add_argument("--filler", required=True, help="utterance records for the filler pool")
    p.add_argument("--synth", required=True, help="synthetic set records")
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--condition", choices=["consecutive", "shuffled"], default="consecutive")
    p.add_argument("--out", required=True)
    p.add_argument("--strict-leakage", action="store_true")
    p.add_argument("--allow-any-ratio", action="store_true")
    _add_detect_flags(p)

    p = sub.add_parser("schedule", help="emit a batch schedule for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=list(METHODS), required=True)
    p.add_argument("--batch-size", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="verify a schedule against its dataset")
    p.add_argument("--schedule", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=list(METHODS), default=None, help="expected method")

    p = sub.add_parser("stats", help="report corpus or dataset statistics")
    p.add_argument("--path", required=True)
    p.add_argument("--json", dest="json_out", default=None)

    p = sub.add_parser("run", help="run the full grid from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    return parser


def _cmd_ingest(args) -> int:
    transcripts = ingest_dir(
        args.corpus_dir,
        keep_tiers=[t.strip() for t in args.keep_tiers.split(",")] if args.keep_tiers else None,
    )
    if args.min_words > 0:
        for t in transcripts:
            t.utterances = filter_short(t.utterances, args.min_words)
    if args.budget > 0:
        utts = select_budget(transcripts, args.budget)
    else:
        utts = [u for t in transcripts for u in t.utterances]
    digest = write_utterances(args.out, utts)
    print(f"wrote {len(utts)} utterances ({sum(len(u.words) for u in utts)} words) to {args.out}")
    print(f"digest {digest}")
    return 0


def _cmd_detect(args) -> int:
    utts = read_utterances(args.records)
    sets = detect_variation_sets(utts, _detect_cfg(args))
    write_sets(args.out, sets)
    covered = sum(len(vs.members) for vs in sets)
    print(f"detected {len(sets)} sets covering {covered} utterances -> {args.out}")
    return 0


def _cmd_synth(args) -> int:
    utts = filter_short(read_utterances(args.records), 3)
    cfg = synth_config(
        {
            "n_variants": args.n_variants,
            "question_ratio_target": args.question_ratio,
            "max_ops_per_variant": args.max_ops,
            "lexicon": args.lexicon,
        },
        seed=args.seed,
    )
    pool = synthesize_pool(utts, cfg, target_words=args.target_words or None)
    write_sets(args.out, pool)
    words = sum(len(t.split()) for vs in pool for t in vs.texts)
    print(f"synthesized {len(pool)} sets ({words} words) -> {args.out}")
    return 0


def _cmd_compose(args) -> int:
    filler = read_utterances(args.filler)
    synth = read_sets(args.synth)
    cfg = CompositionConfig(
        ratio_percent=args.ratio,
        word_budget=args.budget,
        seed=args.seed,
        condition="consecutive",
        allow_any_ratio=args.allow_any_ratio,
    )
    if args.strict_leakage:
        dataset, report = compose_dataset_strict(filler, synth, cfg, _detect_cfg(args))
        print(f"leakage: natural_vs_found={report.natural_vs_found}")
    else:
        dataset = compose_dataset(filler, synth, cfg)
    if args.condition == "shuffled":
        from .composer import shuffle_control

        dataset = shuffle_control(dataset, derive_seed(args.seed, "shuffle"))
    digest = write_dataset(dataset, args.out)
    counts = dataset.word_counts()
    print(
        f"composed {len(dataset.sequences)} sequences, {counts['total']} words "
        f"({counts['vs_member']} vs) -> {args.out}"
    )
    print(f"digest {digest}")
    return 0


def _cmd_schedule(args) -> int:
    dataset = read_dataset(args.dataset)
    maker = schedule_sequential_concat if args.method == METHOD_CONCAT else schedule_adjacent_batch
    schedule = maker(dataset, args.batch_size)
    report = verify_schedule(schedule, dataset)
    if not report.ok:
        print(f"schedule failed verification: {report.first_violation}", file=sys.stderr)
        return 1
    write_schedule(schedule, args.out)
    print(f"{len(schedule.batches)} batches, {schedule.slot_count} slots -> {args.out}")
    return 0


def _cmd_verify(args) -> int:
    dataset = read_dataset(args.dataset)
    schedule = read_schedule(args.schedule, dataset)
    report = verify_schedule(schedule, dataset, expected_method=args.method)
    if report.ok:
        print("ok")
        return 0
    for violation in report.violations:
        print(f"violation: {violation}", file=sys.stderr)
    return 1


def _cmd_stats(args) -> int:
    report = stats_report(args.path, json_out=args.json_out)
    width = max(len(k) for k in report)
    for key, value in report.items():
        if isinstance(value, float):
            value = f"{value:.4f}"
        print(f"{key:<{width}}  {value}")
    return 0


def _cmd_run(args) -> int:
    raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8"))
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.budget is not None:
        raw["word_budget"] = args.budget
    manifest = run_pipeline(raw, out_dir=args.out_dir)
    n_datasets = sum(1 for a in manifest["artifacts"] if a["kind"] == "dataset")
    n_schedules = sum(1 for a in manifest["artifacts"] if a["kind"] == "schedule")
    out_dir = args.out_dir or raw.get("out_dir")
    print(f"grid complete: {n_datasets} datasets, {n_schedules} schedules -> {out_dir}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "detect": _cmd_detect,
    "synth": _cmd_synth,
    "compose": _cmd_compose,
    "schedule": _cmd_schedule,
    "verify": _cmd_verify,
    "stats": _cmd_stats,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
