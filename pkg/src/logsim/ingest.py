"""Raw log ingestion: record parsing, parameter masking, synthetic corpora.

Masking replaces volatile fields (addresses, paths, hex ids, counters)
with fixed uppercase headers so that log lines produced by the same
print statement collapse to the same masked sequence. Rules are plain
regexes applied in priority order over the whole line; the masked text
is whitespace-normalized afterwards.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from typing import Iterable

from .errors import ConfigError, ParseError, RecordRejectedError
from .validation import require

__all__ = [
    "RawLogRecord",
    "MaskRule",
    "ProcessedSequence",
    "DEFAULT_MASK_RULES",
    "compile_rules",
    "load_rules",
    "parse_records",
    "apply_masks",
    "gen_synthetic",
]


@dataclass(frozen=True)
class RawLogRecord:
    """One input log line plus optional metadata carried through the pipeline."""

    index: int
    text: str
    label: int | None = None
    timestamp: str | None = None
    block_id: str | None = None


@dataclass(frozen=True)
class MaskRule:
    """A masking rule: replace every match of ``pattern`` with ``header``."""

    header: str
    pattern: str
    priority: int


@dataclass(frozen=True)
class ProcessedSequence:
    """A masked, whitespace-normalized log sequence.

    ``tokens`` rejoined with single spaces always equals ``text``.
    """

    text: str
    tokens: tuple[str, ...]
    source_index: int


DEFAULT_MASK_RULES = [
    MaskRule("IP", r"\b(?:\d{1,3}\.){3}\d{1,3}(?::\d{1,5})?\b", 10),
    MaskRule("PATH", r"(?<![\w.])(?:/[\w.\-+]+)+/?", 20),
    MaskRule("HEX", r"\b(?:0[xX][0-9a-fA-F]+|[0-9a-fA-F]{8,})\b", 30),
    MaskRule("NUM", r"\b\d+\b", 40),
]

_HEADER_RE = re.compile(r"^[A-Z][A-Z0-9_]*$")


@dataclass(frozen=True)
class _CompiledRule:
    header: str
    regex: re.Pattern
    priority: int


def compile_rules(rules: list[MaskRule]) -> list[_CompiledRule]:
    """Validate and compile a rule set, returning rules in application order.

    Rejects rule sets whose headers could themselves be rewritten by any
    rule in the set: that would make masking non-idempotent.
    """
    compiled = []
    for rule in rules:
        if not _HEADER_RE.match(rule.header):
            raise ConfigError(f"mask header {rule.header!r} is not an uppercase token")
        try:
            regex = re.compile(rule.pattern)
        except re.error as exc:
            raise ConfigError(f"mask rule {rule.header}: bad pattern: {exc}") from exc
        compiled.append(_CompiledRule(rule.header, regex, rule.priority))
    for rule in compiled:
        for other in compiled:
            if other.regex.search(rule.header):
                raise ConfigError(
                    f"header {rule.header!r} matches pattern of rule {other.header!r}; "
                    "masking would not be idempotent"
                )
    return sorted(compiled, key=lambda r: r.priority)


def load_rules(path: str) -> list[MaskRule]:
    """Load mask rules from a JSON file: a list of {header, pattern, priority}."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load mask rules from {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ConfigError(f"{path}: expected a JSON array of rules")
    rules = []
    for pos, item in enumerate(raw):
        if not isinstance(item, dict) or not {"header", "pattern", "priority"} <= item.keys():
            raise ConfigError(f"{path}: rule #{pos} needs header, pattern and priority")
        rules.append(MaskRule(str(item["header"]), str(item["pattern"]), int(item["priority"])))
    return rules


def parse_records(
    lines: Iterable[str],
    fmt: str = "jsonl",
    errors: str = "raise",
):
    """Parse a raw text stream into RawLogRecords.

    ``fmt`` is "jsonl" (objects with a required "text" field and optional
    "label", "timestamp", "block_id") or "plain" (one bare message per
    line). Records keep stream order and get consecutive indices from 0.

    With ``errors="raise"`` the first bad line aborts with ParseError (or
    RecordRejectedError for structurally valid lines with empty text).
    With ``errors="collect"`` parsing is total: returns
    ``(records, rejections)`` where every input line lands in exactly one
    of the two lists.
    """
    require(fmt in ("jsonl", "plain"), f"unknown input format {fmt!r}")
    require(errors in ("raise", "collect"), f"unknown error mode {errors!r}")
    records: list[RawLogRecord] = []
    rejections: list[ParseError] = []

    def _fail(exc: ParseError):
        if errors == "raise":
            raise exc
        rejections.append(exc)

    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if fmt == "plain":
            text, label, timestamp, block_id = line, None, None, None
        else:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                _fail(ParseError(f"malformed JSON: {exc.msg}", line_no))
                continue
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                _fail(ParseError('expected an object with a string "text" field', line_no))
                continue
            text = obj["text"]
            label = obj.get("label")
            if label is not None:
                if not isinstance(label, int) or isinstance(label, bool) or label not in (0, 1):
                    _fail(ParseError(f"label must be 0 or 1, got {obj['label']!r}", line_no))
                    continue
            timestamp = obj.get("timestamp")
            if timestamp is not None:
                timestamp = str(timestamp)
            block_id = obj.get("block_id")
            if block_id is not None:
                block_id = str(block_id)
        if not text.strip():
            _fail(RecordRejectedError("empty text", line_no, index=len(records)))
            continue
        records.append(RawLogRecord(len(records), text, label, timestamp, block_id))
    if errors == "collect":
        return records, rejections
    return records


def apply_masks(
    records: Iterable[RawLogRecord],
    rules: list[MaskRule] | None = None,
) -> list[ProcessedSequence]:
    """Mask every record and return whitespace-normalized sequences.

    Applying the result through the same rules again is a no-op: rule
    validation guarantees no header re-matches any pattern.
    """
    compiled = compile_rules(DEFAULT_MASK_RULES if rules is None else rules)
    out = []
    for record in records:
        text = record.text
        for rule in compiled:
            text = rule.regex.sub(rule.header, text)
        tokens = tuple(text.split())
        out.append(ProcessedSequence(" ".join(tokens), tokens, record.index))
    return out


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------

# Templates share a common stem so that different message types overlap
# heavily at the token level (as real logs from one system do), while each
# type keeps two distinctive tokens. Abnormal lines swap several template
# tokens for corruption vocabulary and insert one extra, so they stay
# separable from every normal template even after masking.
_STEM_HEAD = ("kernel", "monitor", "reports", "subsystem")
_STEM_TAIL = ("event",)
_VERBS = ("started", "stopped", "resumed", "paused", "rotated", "flushed", "scaled", "probed")
_CORRUPTION = ("faultx", "panicz", "corruptq", "deadlockv", "overrunj", "stallw", "refusedk", "abortn")
_SUBSTITUTIONS = 3


def _alpha_id(n: int) -> str:
    digits = []
    n += 1
    while n:
        n, rem = divmod(n - 1, 26)
        digits.append(chr(ord("a") + rem))
    return "".join(reversed(digits))


def _template_tokens(type_index: int) -> list[str]:
    service = f"svc{_alpha_id(type_index)}"
    verb = _VERBS[type_index % len(_VERBS)]
    return [*_STEM_HEAD, service, *_STEM_TAIL, verb]


def gen_synthetic(
    n_types: int,
    logs_per_type: int,
    anomaly_rate: float,
    seed: int,
) -> list[RawLogRecord]:
    """Generate a labeled corpus of template-shaped log lines.

    Emits ``n_types * logs_per_type`` records. Each record instantiates
    one of ``n_types`` distinct templates with fresh parameter values
    (hex session id, source address, pid) that the default mask rules
    remove, so normal records of one type all collapse to the same
    masked sequence. ``round(anomaly_rate * total)`` records are
    token-corrupted and labeled 1; the rest are labeled 0.

    The same seed always reproduces the same corpus.
    """
    require(n_types >= 1, "n_types must be >= 1")
    require(logs_per_type >= 1, "logs_per_type must be >= 1")
    require(0.0 <= anomaly_rate < 1.0, "anomaly_rate must be in [0, 1)")

    rng = random.Random(seed)
    total = n_types * logs_per_type
    abnormal = set(rng.sample(range(total), round(anomaly_rate * total)))

    records = []
    for j in range(total):
        tokens = list(_template_tokens(j % n_types))
        session = rng.getrandbits(32)
        addr = ".".join(str(rng.randint(1, 254)) for _ in range(4))
        port = rng.randint(1024, 65535)
        pid = rng.randint(1, 99999)
        tokens += ["session", f"0x{session:08x}", "from", f"{addr}:{port}", "pid", str(pid)]
        label = 0
        if j in abnormal:
            label = 1
            for pos in rng.sample(range(len(tokens)), _SUBSTITUTIONS):
                tokens[pos] = rng.choice(_CORRUPTION)
            tokens.insert(rng.randint(0, len(tokens)), rng.choice(_CORRUPTION))
        records.append(RawLogRecord(j, " ".join(tokens), label))
    return records
