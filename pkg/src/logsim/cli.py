"""Command line front end.

Subcommands cover the whole pipeline: ``gen`` (synthetic labeled
corpus), ``build-db`` (mask + dedup + persist), ``embed`` (persist
embeddings), ``detect`` (score a test stream), ``eval`` (metrics),
``ablate`` (parameter sweeps) and ``coverage``.

Conventions:
  * exit 0 on success, 1 on usage errors, 2 on data errors;
  * the effective configuration is echoed to stderr as one JSON line,
    and can be fed back via ``--config`` to replay a run;
  * every option default can be overridden by an environment variable
    named LOGSIM_<OPTION> (e.g. LOGSIM_CORE_RATIO=0.05).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from collections import Counter
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .detector import (
    DetectionResult,
    RunConfig,
    ThresholdPolicy,
    choose_threshold,
    detect_period,
)
from .embed import ProviderConfig, embed_batch, write_embedding_file
from .errors import ConfigError, LogsimError
from .evaluation import (
    LabeledScore,
    ablate,
    coverage,
    evaluate,
    render_cells,
)
from .ingest import apply_masks, gen_synthetic, load_rules, parse_records
from .retrieval import (
    AGGREGATIONS,
    FEATURE_MODES,
    SCORE_MODES,
    CoreSetConfig,
    ScoringEngine,
    ScoringStats,
)
from .store import build_block_views, build_db, load_db, save_db
from .validation import require

__all__ = ["main", "run", "UsageError"]

_ENV_PREFIX = "LOGSIM_"


class UsageError(LogsimError):
    """Bad flags or flag combinations; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Option registry
# ---------------------------------------------------------------------------

def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


class Opt:
    """One CLI option: flag spec, converter, default and help text."""

    def __init__(self, flag: str, default, help: str, *, conv: Callable = str,
                 choices: tuple | None = None, required: bool = False):
        self.flag = flag
        self.dest = flag.lstrip("-").replace("-", "_")
        self.default = default
        self.help = help
        self.conv = conv
        self.choices = choices
        self.required = required
        self.is_flag = conv is _parse_bool and default is False

    def add_to(self, parser: argparse.ArgumentParser) -> None:
        # Required options are enforced after merging (a --config file may
        # supply them), not by argparse itself.
        if self.is_flag:
            parser.add_argument(self.flag, dest=self.dest, action="store_true",
                                default=argparse.SUPPRESS, help=self.help)
            return
        parser.add_argument(self.flag, dest=self.dest, type=self.conv,
                            choices=self.choices,
                            default=argparse.SUPPRESS, help=self.help)

    def from_env(self):
        import os

        raw = os.environ.get(_ENV_PREFIX + self.dest.upper())
        if raw is None:
            return None
        try:
            value = self.conv(raw)
        except (ValueError, TypeError) as exc:
            raise UsageError(
                f"{_ENV_PREFIX}{self.dest.upper()}: cannot parse {raw!r}: {exc}") from exc
        if self.choices and value not in self.choices:
            raise UsageError(
                f"{_ENV_PREFIX}{self.dest.upper()}: {value!r} not in {self.choices}")
        return value


def _io_opts(input_help: str) -> list[Opt]:
    return [
        Opt("--input", None, input_help, required=True),
        Opt("--format", "jsonl", "input format", choices=("jsonl", "plain")),
        Opt("--rules", None, "JSON file with masking rules (default: built-in rules)"),
    ]


_TEST_OPTS = [
    Opt("--test", None, "test records (JSONL or plain lines)", required=True),
    Opt("--format", "jsonl", "test input format", choices=("jsonl", "plain")),
    Opt("--rules", None, "JSON file with masking rules (default: built-in rules)"),
]

_PROVIDER_OPTS = [
    Opt("--provider", "hash", "embedding provider", choices=("hash", "file")),
    Opt("--embeddings", None, "embedding file for the document store (implies file provider)"),
    Opt("--dim", 64, "embedding width for the hash provider", conv=int),
    Opt("--max-tokens", None,
        "token cap per sequence including the summary row "
        "(default 128, or 512 in block mode)", conv=int),
    Opt("--seed", 0, "seed for hashing, sampling and calibration hold-out", conv=int),
]

_CORE_OPTS = [
    Opt("--core-k", None, "absolute core-set size", conv=int),
    Opt("--core-ratio", None, "core-set size as a fraction of the store (default 0.01)",
        conv=float),
    Opt("--score-mode", "nearest_only", "how core-set distances combine",
        choices=SCORE_MODES),
    Opt("--feature-mode", "all_tokens", "rows used for similarity",
        choices=FEATURE_MODES),
    Opt("--aggregation", "sum", "token-level aggregation", choices=AGGREGATIONS),
]

_SUBCOMMANDS: dict[str, dict] = {
    "gen": {
        "help": "generate a synthetic labeled corpus as JSONL",
        "opts": [
            Opt("--types", 5, "number of distinct message types", conv=int),
            Opt("--logs-per-type", 100, "records per type", conv=int),
            Opt("--anomaly-rate", 0.05, "fraction of abnormal records", conv=float),
            Opt("--seed", 7, "generator seed", conv=int),
            Opt("--out", "-", "output path (- for stdout)"),
        ],
    },
    "build-db": {
        "help": "mask, deduplicate and persist a known-normal store",
        "opts": _io_opts("known-normal records (JSONL or plain lines)") + [
            Opt("--block-mode", False, "store one canonical sequence per block_id",
                conv=_parse_bool),
            Opt("--out", None, "output store path", required=True),
        ],
    },
    "embed": {
        "help": "embed a persisted store and write an embedding file",
        "opts": [
            Opt("--db", None, "persisted sequence store", required=True),
            Opt("--out", None, "output embedding file", required=True),
        ] + _PROVIDER_OPTS,
    },
    "detect": {
        "help": "score test records against a known-normal store",
        "opts": [
            Opt("--db", None, "persisted known-normal store", required=True),
            Opt("--query-embeddings", None,
                "embedding file for test sequences (file provider only)"),
            Opt("--block-mode", False, "score per block_id instead of per line",
                conv=_parse_bool),
            Opt("--period-size", None, "score the test stream in chunks of N records",
                conv=int),
            Opt("--threshold-policy", "normal_quantile", "how the decision threshold is set",
                choices=("fixed", "normal_quantile")),
            Opt("--threshold-value", 0.999,
                "threshold for fixed policy, quantile level otherwise", conv=float),
            Opt("--calibration", None,
                "known-normal records scored to place the quantile threshold "
                "(default: hold out part of the store)"),
            Opt("--calibration-fraction", 0.1,
                "fraction of store sequences held out when no calibration file is given",
                conv=float),
            Opt("--workers", 1, "scoring threads", conv=int),
            Opt("--out", "-", "output results path (- for stdout)"),
        ] + _TEST_OPTS + _PROVIDER_OPTS + _CORE_OPTS,
    },
    "eval": {
        "help": "compute metrics from detect results or end to end",
        "opts": [
            Opt("--results", None, "JSONL results from detect"),
            Opt("--labels", None, "JSONL with ground-truth labels for --results"),
            Opt("--db", None, "persisted known-normal store (end-to-end mode)"),
            Opt("--test", None, "labeled test records (end-to-end mode)"),
            Opt("--format", "jsonl", "test input format", choices=("jsonl", "plain")),
            Opt("--rules", None, "JSON file with masking rules (default: built-in rules)"),
            Opt("--best-f1", False, "print only the best F1 over all thresholds",
                conv=_parse_bool),
            Opt("--auroc", False, "print only the AUROC", conv=_parse_bool),
            Opt("--report", "json", "report format", choices=("json", "text")),
            Opt("--workers", 1, "scoring threads", conv=int),
        ] + _PROVIDER_OPTS + _CORE_OPTS,
    },
    "ablate": {
        "help": "sweep one pipeline parameter over a labeled corpus",
        "opts": _io_opts("labeled corpus (JSONL)") + [
            Opt("--axis", None, "parameter to sweep", required=True,
                choices=("core_ratio", "known_ratio", "score_mode", "feature_mode")),
            Opt("--values", None, "comma-separated values for the axis", required=True),
            Opt("--known-fraction", 0.8,
                "fraction of normal records used as the known store", conv=float),
            Opt("--report", "json", "report format", choices=("json", "csv", "text")),
            Opt("--workers", 1, "scoring threads", conv=int),
            Opt("--out", "-", "output path (- for stdout)"),
        ] + _PROVIDER_OPTS + _CORE_OPTS,
    },
    "coverage": {
        "help": "report how much of a test stream the store already covers",
        "opts": [
            Opt("--db", None, "persisted known-normal store", required=True),
        ] + _TEST_OPTS,
    },
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="logsim",
                     description="Training-free log anomaly detection by "
                                 "retrieval over known-normal logs")
    parser.add_argument("--version", action="version", version=f"logsim {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for name, spec in _SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=spec["help"], description=spec["help"])
        sub.add_argument("--config", default=argparse.SUPPRESS,
                         help="JSON config from a previous run's stderr echo; "
                              "explicit flags override it")
        for opt in spec["opts"]:
            opt.add_to(sub)
    return parser


def _effective_options(name: str, given: dict) -> dict:
    """Merge defaults, environment, --config file and explicit flags."""
    opts: dict = {}
    for opt in _SUBCOMMANDS[name]["opts"]:
        opts[opt.dest] = opt.default
        env_value = opt.from_env()
        if env_value is not None:
            opts[opt.dest] = env_value
    config_path = given.pop("config", None)
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as handle:
            loaded = json.load(handle)
        require(isinstance(loaded, dict), f"{config_path}: config must be a JSON object",
                UsageError)
        replay_sub = loaded.pop("subcommand", name)
        require(replay_sub == name,
                f"{config_path}: config is for subcommand {replay_sub!r}, not {name!r}",
                UsageError)
        unknown = set(loaded) - set(opts)
        require(not unknown,
                f"{config_path}: unknown option(s) {sorted(unknown)}", UsageError)
        opts.update(loaded)
    opts.update(given)
    for opt in _SUBCOMMANDS[name]["opts"]:
        if opt.required:
            require(opts.get(opt.dest) is not None,
                    f"{opt.flag} is required", UsageError)
    return opts


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def _read_lines(path: str):
    if path == "-":
        return sys.stdin.read().splitlines()
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read().splitlines()


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def _load_records(opts: dict, key: str = "input"):
    return parse_records(_read_lines(opts[key]), fmt=opts.get("format", "jsonl"))


def _load_rules_opt(opts: dict):
    path = opts.get("rules")
    return load_rules(path) if path else None


def _provider_config(opts: dict) -> ProviderConfig:
    source = opts.get("embeddings")
    provider = "file" if source else opts.get("provider", "hash")
    if provider == "file":
        require(source is not None, "--provider file requires --embeddings", UsageError)
    max_tokens = opts.get("max_tokens")
    if max_tokens is None:
        max_tokens = 512 if opts.get("block_mode") else 128
    return ProviderConfig(
        provider=provider,
        dim=None if provider == "file" else opts.get("dim", 64),
        max_tokens=max_tokens,
        seed=opts.get("seed", 0),
        source=source,
    )


def _core_config(opts: dict) -> CoreSetConfig:
    return CoreSetConfig(
        k=opts.get("core_k"),
        ratio=opts.get("core_ratio"),
        feature_mode=opts.get("feature_mode", "all_tokens"),
        score_mode=opts.get("score_mode", "nearest_only"),
        aggregation=opts.get("aggregation", "sum"),
    )


def _run_config(opts: dict) -> RunConfig:
    return RunConfig(
        rules=_load_rules_opt(opts),
        provider=_provider_config(opts),
        core=_core_config(opts),
        block_mode=bool(opts.get("block_mode", False)),
        period_size=opts.get("period_size"),
        workers=int(opts.get("workers", 1)),
        query_source=opts.get("query_embeddings"),
    )


def _note(payload: dict) -> None:
    print(json.dumps(payload), file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_gen(opts: dict) -> int:
    records = gen_synthetic(opts["types"], opts["logs_per_type"],
                            opts["anomaly_rate"], opts["seed"])
    lines = [json.dumps({"text": r.text, "label": r.label}) for r in records]
    _write_text(opts["out"], "\n".join(lines) + "\n")
    return 0


def _cmd_build_db(opts: dict) -> int:
    records = _load_records(opts)
    sequences = apply_masks(records, _load_rules_opt(opts))
    if opts["block_mode"]:
        views = build_block_views(records, sequences)
        db, view_ids = build_db(view.canonical_text for view in views)
        by_index = {}
        for view, seq_id in zip(views, view_ids):
            for record_index in view.member_indices:
                by_index[record_index] = seq_id
        lookup = [by_index[record.index] for record in records]
    else:
        db, lookup = build_db(sequences)
    save_db(db, lookup, opts["out"])
    _note({"entries": len(db), "records": len(lookup), "out": opts["out"]})
    return 0


def _cmd_embed(opts: dict) -> int:
    db, _ = load_db(opts["db"])
    provider = _provider_config(opts)
    embeddings = embed_batch(db, provider)
    write_embedding_file(opts["out"], embeddings)
    first = embeddings[next(iter(sorted(embeddings)))]
    _note({"sequences": len(embeddings), "dim": first.dim, "out": opts["out"]})
    return 0


def _resolve_threshold(db, lookup, doc_embeddings, run: RunConfig, opts: dict) -> float:
    """Pick the decision threshold.

    Quantile policy without a calibration file holds out a seeded
    fraction of the store's sequences, scores them against the rest and
    takes the quantile over per-record scores (record counts from the
    store's lookup table). The hold-out only calibrates; detection still
    scores against the full store.
    """
    policy = ThresholdPolicy(opts["threshold_policy"], opts["threshold_value"])
    if policy.kind == "fixed":
        return policy.value

    if opts.get("calibration"):
        require(run.provider.provider == "hash",
                "--calibration requires the hash provider (file embeddings "
                "cannot cover arbitrary calibration records)", UsageError)
        calib_records = parse_records(_read_lines(opts["calibration"]),
                                      fmt=opts.get("format", "jsonl"))
        results = detect_period(calib_records, db, doc_embeddings, run, math.inf)
        scores = [r.abnormal_score for r in results]
        return choose_threshold(scores, policy)

    ids = sorted(doc_embeddings)
    require(len(ids) >= 2,
            "calibration hold-out needs at least two stored sequences; "
            "pass --calibration or a fixed threshold", ConfigError)
    fraction = opts["calibration_fraction"]
    require(0.0 < fraction < 1.0, "--calibration-fraction must be in (0, 1)", UsageError)
    n_held = min(len(ids) - 1, max(1, round(fraction * len(ids))))
    perm = np.random.default_rng(opts.get("seed", 0)).permutation(len(ids))
    held = sorted(ids[int(i)] for i in perm[:n_held])
    kept = {i: e for i, e in doc_embeddings.items() if i not in set(held)}

    engine = ScoringEngine(kept, run.core)
    score_map = engine.score({i: doc_embeddings[i] for i in held}, run.workers)
    counts = Counter(lookup)
    per_record = []
    for seq_id in held:
        per_record.extend([score_map[seq_id].abnormal_score] * max(1, counts[seq_id]))
    return choose_threshold(per_record, policy)


def _result_row(result: DetectionResult, block_mode: bool) -> dict:
    row = {"index": result.record_index}
    if block_mode:
        row["block_id"] = result.block_id
    else:
        row["seq_id"] = result.seq_id
    row["score"] = result.abnormal_score
    row["pred"] = result.prediction
    row["threshold"] = result.threshold
    row["nearest_doc"] = result.nearest_doc_id
    return row


def _cmd_detect(opts: dict) -> int:
    db, lookup = load_db(opts["db"])
    run = _run_config(opts)
    doc_embeddings = embed_batch(db, run.provider)
    threshold = _resolve_threshold(db, lookup, doc_embeddings, run, opts)
    records = _load_records(opts, key="test")
    stats = ScoringStats()
    results = detect_period(records, db, doc_embeddings, run, threshold, stats)
    lines = [json.dumps(_result_row(r, run.block_mode)) for r in results]
    _write_text(opts["out"], "\n".join(lines) + "\n" if lines else "")
    _note({
        "records": len(results),
        "flagged": sum(r.prediction for r in results),
        "threshold": threshold,
        "documents": len(doc_embeddings),
        "queries_scored": stats.queries_scored,
        "scoring_seconds": round(stats.scoring_seconds, 6),
    })
    return 0


def _labeled_pairs_from_results(opts: dict) -> tuple[list[LabeledScore], float | None]:
    rows = []
    for line_no, line in enumerate(_read_lines(opts["results"]), start=1):
        if not line.strip():
            continue
        row = json.loads(line)
        require(isinstance(row, dict) and "score" in row,
                f"--results line {line_no}: expected an object with a score", ConfigError)
        rows.append(row)
    require(len(rows) > 0, "--results file is empty", ConfigError)
    require(opts.get("labels") is not None,
            "--results requires --labels", UsageError)

    labels_by_index: dict[int, int] = {}
    positional: list[int] = []
    label_records = parse_records(_read_lines(opts["labels"]), fmt="jsonl")
    for record in label_records:
        require(record.label is not None,
                f"--labels record {record.index} has no label", ConfigError)
        positional.append(record.label)
        labels_by_index[record.index] = record.label

    pairs = []
    for pos, row in enumerate(rows):
        index = row.get("index", pos)
        require(index in labels_by_index,
                f"no label for result index {index}", ConfigError)
        pairs.append(LabeledScore(float(row["score"]), labels_by_index[index]))
    thresholds = {row.get("threshold") for row in rows}
    delta = thresholds.pop() if len(thresholds) == 1 else None
    return pairs, (float(delta) if delta is not None else None)


def _labeled_pairs_end_to_end(opts: dict) -> tuple[list[LabeledScore], None]:
    db, _ = load_db(opts["db"])
    run = _run_config(opts)
    records = _load_records(opts, key="test")
    for record in records:
        require(record.label is not None,
                f"test record {record.index} has no label", ConfigError)
    doc_embeddings = embed_batch(db, run.provider)
    results = detect_period(records, db, doc_embeddings, run, math.inf)
    by_index = {r.record_index: r.abnormal_score for r in results}
    pairs = [LabeledScore(by_index[r.index], r.label) for r in records]
    return pairs, None


def _cmd_eval(opts: dict) -> int:
    if opts.get("results"):
        pairs, delta = _labeled_pairs_from_results(opts)
    else:
        require(opts.get("db") and opts.get("test"),
                "eval needs either --results/--labels or --db/--test", UsageError)
        pairs, delta = _labeled_pairs_end_to_end(opts)
    report = evaluate(pairs, delta)

    selected = [name for name, picked in (("best_f1", opts["best_f1"]),
                                          ("auroc", opts["auroc"])) if picked]
    if selected:
        for name in selected:
            print(f"{name} {getattr(report, name)}")
        return 0
    if opts["report"] == "json":
        print(json.dumps(report.to_dict(), indent=2))
        return 0
    for key, value in report.to_dict().items():
        print(f"{key:>24}  {value}")
    return 0


def _cmd_ablate(opts: dict) -> int:
    require(opts.get("embeddings") is None,
            "ablate rebuilds its document sets per cell and supports only "
            "the hash provider", UsageError)
    records = _load_records(opts)
    axis = opts["axis"]
    raw_values = [v.strip() for v in str(opts["values"]).split(",") if v.strip()]
    require(len(raw_values) > 0, "--values is empty", UsageError)
    values: list = [float(v) for v in raw_values] if axis.endswith("_ratio") else raw_values
    config = _run_config(opts)
    cells = ablate(records, axis, values, config,
                   seed=opts.get("seed", 0), known_fraction=opts["known_fraction"])
    _write_text(opts["out"], render_cells(cells, opts["report"]))
    if opts["out"] != "-":
        _note({"cells": len(cells), "out": opts["out"]})
    return 0


def _cmd_coverage(opts: dict) -> int:
    db, _ = load_db(opts["db"])
    records = _load_records(opts, key="test")
    sequences = apply_masks(records, _load_rules_opt(opts))
    print(json.dumps(coverage(db, sequences).to_dict(), indent=2))
    return 0


_HANDLERS = {
    "gen": _cmd_gen,
    "build-db": _cmd_build_db,
    "embed": _cmd_embed,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "coverage": _cmd_coverage,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Parse argv, echo the effective config to stderr and dispatch."""
    parser = _build_parser()
    namespace = parser.parse_args(argv)
    name = namespace.subcommand
    if name is None:
        raise UsageError("a subcommand is required (see --help)")
    given = {k: v for k, v in vars(namespace).items() if k != "subcommand"}
    opts = _effective_options(name, given)
    _note({"subcommand": name, **{k: opts[k] for k in sorted(opts)}})
    return _HANDLERS[name](opts)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except (UsageError, ConfigError) as exc:
        print(f"logsim: error: {exc}", file=sys.stderr)
        return 1
    except (LogsimError, OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"logsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
