"""Command-line entry point: ``vslkit <command> ...``.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .corpus import CorpusError, ShardCorruptionError, ShardFormatError, TokenizedDocument, load_documents, write_shard
from .costmodel import StepTimeModel, expected_step_time, fit, read_measurements, speedup
from .decompose import (
    BucketStore,
    PackConfig,
    best_fit_pack,
    concat_and_chunk,
    decompose_corpus,
    prechunk,
    read_chunk_manifest,
    write_chunk_manifest,
)
from .scheduler import (
    CURRICULUM_PRESETS,
    GIB,
    MIXTURE_PRESETS,
    CurriculumSpec,
    MixtureSpec,
    ScheduleError,
    ScheduleReport,
    build_mixture,
    curriculum_preset,
    make_schedule,
    mixture_preset,
    validate_schedule,
)
from .stats import context_distribution, mixture_avg_lengths, stats_report

log = logging.getLogger("vslkit")

INPUT_ERRORS = (
    OSError,
    ValueError,
    KeyError,
    CorpusError,
    ShardFormatError,
    ShardCorruptionError,
    ScheduleError,
    json.JSONDecodeError,
)


class InputError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"input file not found: {path}")
    return p


def _dump(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_mixture(value: str, unit: int) -> MixtureSpec:
    if os.path.isfile(value):
        with open(value, encoding="utf-8") as fh:
            return MixtureSpec.from_json(json.load(fh))
    return mixture_preset(value, unit)


def _load_curriculum(value: str, cycles: int | None, exponents) -> CurriculumSpec:
    if os.path.isfile(value):
        with open(value, encoding="utf-8") as fh:
            spec = CurriculumSpec.from_json(json.load(fh))
        return CurriculumSpec(spec.odds, cycles, spec.name) if cycles else spec
    return curriculum_preset(value, cycles or 1, exponents)


def cmd_decompose(args) -> int:
    docs = load_documents(_existing(args.input))
    log.info("loaded %d documents", len(docs))
    store = decompose_corpus(docs, args.min_exp, args.max_exp, append_eot=args.append_eot, eot_token=args.eot_id)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    store.write_manifest(out / "buckets.jsonl")
    by_id = {d.doc_id: d for d in docs}
    for exp, recs in sorted(store.buckets.items()):
        if not recs:
            continue
        seqs = [TokenizedDocument(k, store.materialize(r, by_id[r.doc_id])) for k, r in enumerate(recs)]
        write_shard(seqs, out / f"D{exp}.shard")
    summary = {
        "documents": len(docs),
        "corpus_tokens": sum(d.source_len for d in docs),
        "min_exp": store.min_exp,
        "max_exp": store.max_exp,
        "dropped_tokens": store.dropped_tokens,
        "buckets": {str(i): {"sequences": len(r), "tokens": len(r) << i} for i, r in sorted(store.buckets.items())},
    }
    _dump(summary, str(out / "summary.json"))
    log.info("wrote %d records to %s", store.n_records, out)
    _dump(summary, None)
    return 0


def cmd_chunk(args) -> int:
    docs = load_documents(_existing(args.input))
    chunks = concat_and_chunk(docs, args.target_len, args.eot_id, args.seed)
    n = write_chunk_manifest(chunks, args.output)
    log.info("wrote %d chunks of %d tokens to %s", n, args.target_len, args.output)
    return 0


def cmd_pack(args) -> int:
    docs = load_documents(_existing(args.input))
    config = PackConfig(args.context, args.pad_id)
    bins = best_fit_pack(prechunk(docs, config.context_size), config)
    n = write_chunk_manifest(bins, args.output)
    log.info("wrote %d bins (%d pad tokens) to %s", n, sum(b.pad_count for b in bins), args.output)
    return 0


def cmd_schedule(args) -> int:
    store = BucketStore.read_manifest(_existing(args.buckets))
    mixture = _load_mixture(args.mixture, args.budget_unit)
    curriculum = _load_curriculum(args.curriculum, args.cycles, sorted(mixture.active()))
    selection = build_mixture(store, mixture, args.seed)
    report = make_schedule(selection, curriculum, args.batch_tokens, args.seed, mixture_name=mixture.name)
    verdict = validate_schedule(report, selection, args.batch_tokens)
    if not verdict:
        log.error("invalid schedule: %s", verdict.reason)
        return 1
    report.write_manifest(args.output)
    log.info("wrote %d steps to %s", len(report.steps), args.output)
    return 0


def _manifest_kind(path: Path) -> str:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                if "b" in obj and "seed" in obj:
                    return "schedule"
                if "segments" in obj:
                    return "chunks"
                if "exp" in obj and "off" in obj:
                    return "buckets"
                raise InputError(f"{path}: unrecognized manifest")
    raise InputError(f"{path}: empty manifest")


def cmd_stats(args) -> int:
    if args.mixture:
        report = mixture_avg_lengths(_load_mixture(args.mixture, args.budget_unit)).to_json()
        report["source"] = f"mixture:{args.mixture}"
        _dump(report, args.output)
        return 0
    if not args.manifest:
        raise InputError("give a manifest or --mixture")
    path = _existing(args.manifest)
    kind = _manifest_kind(path)
    if kind == "schedule":
        sched = ScheduleReport.read_manifest(path)
        items = [r for s in sched.steps for r in s.refs]
        lengths = [r.length for r in items]
    elif kind == "buckets":
        items = [r for _, r in BucketStore.read_manifest(path).items()]
        lengths = [r.length for r in items]
    else:
        items = read_chunk_manifest(path)
        lengths = [c.target_len for c in items]
    if not lengths:
        raise InputError(f"{path}: manifest holds no sequences")
    ctx = context_distribution(items)
    report = stats_report(lengths, ctx)
    report["source"] = f"{kind}:{path}"
    if args.csv:
        hist = ctx if not args.log_bins else ctx.rebin_log2()
        Path(args.csv).write_text(hist.to_csv(), encoding="utf-8")
    _dump(report, args.output)
    return 0


def cmd_fit_cost(args) -> int:
    model = fit(read_measurements(_existing(args.measurements)))
    model.save(args.output)
    log.info("alpha=%.4f ms beta=%.6g ms/token", model.alpha_, model.beta_)
    return 0


def cmd_cost(args) -> int:
    model = StepTimeModel.load(_existing(args.model))
    mixture = _load_mixture(args.mixture, args.budget_unit)
    t = expected_step_time(model, mixture)
    _dump(
        {
            "mixture": mixture.name,
            "expected_step_time_ms": t,
            "baseline_len": args.baseline_len,
            "baseline_step_time_ms": float(model.predict([args.baseline_len])[0]),
            "speedup": speedup(model, mixture, args.baseline_len),
        },
        args.output,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vslkit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log one line per phase to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="split documents into power-of-two buckets")
    d.add_argument("input", help="corpus as JSONL ({id, tokens} per line) or token shard")
    d.add_argument("output", help="output directory (buckets.jsonl, D<i>.shard, summary.json)")
    d.add_argument("--min-exp", type=_nonneg_int, default=6, help="smallest bucket exponent (default 6)")
    d.add_argument("--max-exp", type=_nonneg_int, default=13, help="largest bucket exponent (default 13)")
    d.add_argument("--append-eot", action="store_true", help="append --eot-id to each document first")
    d.add_argument("--eot-id", type=_nonneg_int, default=None, help="end-of-text token id")
    d.set_defaults(func=cmd_decompose)

    c = sub.add_parser("chunk", help="concat-and-chunk baseline")
    c.add_argument("input", help="corpus as JSONL or token shard")
    c.add_argument("output", help="chunk manifest (JSONL)")
    c.add_argument("--target-len", type=_positive_int, default=8192, help="chunk length in tokens (default 8192)")
    c.add_argument("--eot-id", type=_nonneg_int, default=0, help="separator token id (default 0)")
    c.add_argument("--seed", type=_nonneg_int, default=0, help="document shuffle seed (default 0)")
    c.set_defaults(func=cmd_chunk)

    k = sub.add_parser("pack", help="best-fit-decreasing packing baseline")
    k.add_argument("input", help="corpus as JSONL or token shard")
    k.add_argument("output", help="chunk manifest (JSONL)")
    k.add_argument("--context", type=_positive_int, default=2048, help="bin size in tokens (default 2048)")
    k.add_argument("--pad-id", type=_nonneg_int, default=0, help="pad token id (default 0)")
    k.set_defaults(func=cmd_pack)

    s = sub.add_parser("schedule", help="build a variable-sequence-length batch schedule")
    s.add_argument("buckets", help="bucket manifest from 'decompose'")
    s.add_argument("output", help="schedule manifest (JSONL)")
    s.add_argument("--mixture", default="natural",
                   help=f"preset ({', '.join(MIXTURE_PRESETS)}) or JSON file (default natural)")
    s.add_argument("--curriculum", default="uniform",
                   help=f"preset ({', '.join(CURRICULUM_PRESETS)}) or JSON file (default uniform)")
    s.add_argument("--cycles", type=_positive_int, default=None, help="curriculum cycles (default 1)")
    s.add_argument("--batch-tokens", type=_positive_int, default=1 << 19, help="tokens per step (default 524288)")
    s.add_argument("--budget-unit", type=_positive_int, default=GIB,
                   help="tokens per preset budget coefficient (default 2^30)")
    s.add_argument("--seed", type=_nonneg_int, default=0, help="global seed (default 0)")
    s.set_defaults(func=cmd_schedule)

    t = sub.add_parser("stats", help="length and context statistics of a manifest or mixture")
    t.add_argument("manifest", nargs="?", help="schedule, bucket or chunk manifest")
    t.add_argument("--mixture", help="analytic statistics of a mixture preset or JSON file instead")
    t.add_argument("--budget-unit", type=_positive_int, default=GIB, help="tokens per preset coefficient")
    t.add_argument("--csv", help="write the context-length histogram as CSV")
    t.add_argument("--log-bins", action="store_true", help="rebin the CSV histogram by powers of two")
    t.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
    t.set_defaults(func=cmd_stats)

    f = sub.add_parser("fit-cost", help="fit the step-time model from measurements")
    f.add_argument("measurements", help="CSV with seq_len,step_time_ms,b rows")
    f.add_argument("output", help="model JSON")
    f.set_defaults(func=cmd_fit_cost)

    m = sub.add_parser("cost", help="predict step time and speedup for a mixture")
    m.add_argument("model", help="model JSON from 'fit-cost'")
    m.add_argument("--mixture", default="natural", help="preset or JSON file (default natural)")
    m.add_argument("--budget-unit", type=_positive_int, default=GIB, help="tokens per preset coefficient")
    m.add_argument("--baseline-len", type=_positive_int, default=8192, help="fixed-length baseline (default 8192)")
    m.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
    m.set_defaults(func=cmd_cost)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"vslkit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"vslkit {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
