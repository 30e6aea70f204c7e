"""Evaluation metrics and decoding diagnostics."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from html import escape
from typing import Hashable, NamedTuple, Optional, Sequence

import numpy as np

from seqdec.decoder import score_sequence
from seqdec.lm import NgramLm
from seqdec.model import ConditionalSequenceModel
from seqdec.scoring import AttentionMatrix, ScoreConfig


class EditDistance(NamedTuple):
    distance: int
    insertions: int
    deletions: int
    substitutions: int


def _edit_table(a: Sequence, b: Sequence) -> np.ndarray:
    n, m = len(a), len(b)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(
                d[i - 1, j - 1] + (a[i - 1] != b[j - 1]),
                d[i - 1, j] + 1,
                d[i, j - 1] + 1,
            )
    return d


def edit_operations(a: Sequence[Hashable], b: Sequence[Hashable]) -> list[tuple[str, Optional[Hashable], Optional[Hashable]]]:
    """One minimal edit script turning ``a`` into ``b``.

    Entries are ``(op, a_token, b_token)`` with ``op`` in ``match``, ``sub``,
    ``del``, ``ins``. When several moves are optimal the backtrace prefers
    the diagonal, then deletion, then insertion.
    """
    d = _edit_table(a, b)
    ops = []
    i, j = len(a), len(b)
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (a[i - 1] != b[j - 1]):
            ops.append(("match" if a[i - 1] == b[j - 1] else "sub", a[i - 1], b[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append(("del", a[i - 1], None))
            i -= 1
        else:
            ops.append(("ins", None, b[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def edit_distance(a: Sequence[Hashable], b: Sequence[Hashable]) -> EditDistance:
    """Token-level Levenshtein distance with unit costs and operation counts."""
    counts = Counter(op for op, _, _ in edit_operations(a, b))
    dist = counts["sub"] + counts["del"] + counts["ins"]
    return EditDistance(dist, counts["ins"], counts["del"], counts["sub"])


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(hyp: Sequence, ref: Sequence, max_n: int) -> np.ndarray:
    # [hyp_len, ref_len, match_1, total_1, ..., match_n, total_n]
    stats = [len(hyp), len(ref)]
    for n in range(1, max_n + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        stats.append(sum(min(c, r[g]) for g, c in h.items()))
        stats.append(max(len(hyp) - n + 1, 0))
    return np.asarray(stats, dtype=np.int64)


def _bleu_from_stats(stats: np.ndarray, max_n: int, smooth: bool) -> float:
    c, r = int(stats[0]), int(stats[1])
    if c == 0:
        return 0.0
    log_p = 0.0
    for n in range(max_n):
        match, total = int(stats[2 + 2 * n]), int(stats[3 + 2 * n])
        if smooth and n > 0:
            match, total = match + 1, total + 1
        if match == 0 or total == 0:
            return 0.0
        log_p += math.log(match / total)
    bp = min(1.0, math.exp(1 - r / c))
    return bp * math.exp(log_p / max_n)


def bleu(hypotheses: Sequence[Sequence], references: Sequence[Sequence], max_n: int = 4) -> float:
    """Corpus BLEU: clipped n-gram precisions pooled over the corpus, with brevity penalty, no smoothing."""
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    stats = np.zeros(2 + 2 * max_n, dtype=np.int64)
    for hyp, ref in zip(hypotheses, references):
        stats += _bleu_stats(hyp, ref, max_n)
    return _bleu_from_stats(stats, max_n, smooth=False)


def sentence_bleu(hypothesis: Sequence, reference: Sequence, max_n: int = 4, smooth: bool = True) -> float:
    """Single-pair BLEU; ``smooth`` adds one to matches and totals for n >= 2."""
    return _bleu_from_stats(_bleu_stats(hypothesis, reference, max_n), max_n, smooth)


# ---------------------------------------------------------------------------
# length and score diagnostics
# ---------------------------------------------------------------------------


class LengthStats(NamedTuple):
    mean_decoded: float
    mean_reference: float
    ratio: float


def length_stats(decoded: Sequence[Sequence], references: Sequence[Sequence]) -> LengthStats:
    if not decoded or len(decoded) != len(references):
        raise ValueError("need non-empty, equally long lists of decoded outputs and references")
    mean_hyp = sum(len(d) for d in decoded) / len(decoded)
    mean_ref = sum(len(r) for r in references) / len(references)
    return LengthStats(mean_hyp, mean_ref, mean_hyp / mean_ref if mean_ref else math.inf)


@dataclass
class ScoreRatio:
    decoded_score: float
    gold_score: float
    ratio: float
    # the gold output outscores the decoder's choice: the search, not the model, failed
    search_error: bool


@dataclass
class ScoreRatioReport:
    pairs: list[ScoreRatio]
    mean_ratio: float
    search_errors: int


def _ratio(a: float, b: float) -> float:
    if a == b:
        return 1.0
    if b == 0:
        return math.copysign(math.inf, -a)
    return a / b


def score_ratio_report(
    model: ConditionalSequenceModel,
    scoring: ScoreConfig,
    triples: Sequence[tuple[Sequence[int], Sequence[int], Sequence[int]]],
    lm: Optional[NgramLm] = None,
) -> ScoreRatioReport:
    """Compare decoded and gold outputs under the same final score.

    ``triples`` holds ``(decoded, gold, source)`` id sequences; decoded and
    gold exclude ``<sos>`` and ``<eos>``. Scores are log-domain (<= 0 without
    bonuses), so the ratio is reported as-is. The ``search_error`` flag is
    the unambiguous signal.
    """
    pairs = []
    for decoded, gold, source in triples:
        s_hat = score_sequence(model, source, decoded, scoring, lm).final_score
        s_gold = score_sequence(model, source, gold, scoring, lm).final_score
        pairs.append(ScoreRatio(s_hat, s_gold, _ratio(s_hat, s_gold), s_gold > s_hat))
    finite = [p.ratio for p in pairs if math.isfinite(p.ratio)]
    mean_ratio = sum(finite) / len(finite) if finite else math.nan
    return ScoreRatioReport(pairs, mean_ratio, sum(p.search_error for p in pairs))


class AttentionReport(NamedTuple):
    uncovered: list[int]
    multi_attended: list[int]


def attention_report(attention, threshold: float = 0.5) -> AttentionReport:
    """Source columns never attended above ``threshold``, and columns attended above it at two or more steps."""
    A = attention.rows if isinstance(attention, AttentionMatrix) else np.atleast_2d(np.asarray(attention, dtype=np.float64))
    hits = (A >= threshold).sum(axis=0)
    return AttentionReport(
        [int(j) for j in np.flatnonzero(hits == 0)],
        [int(j) for j in np.flatnonzero(hits >= 2)],
    )


def attention_svg(attention, source_tokens: Sequence[str], target_tokens: Sequence[str], cell: int = 24) -> str:
    """Grayscale heatmap, one row per target token and one column per source token."""
    A = attention.rows if isinstance(attention, AttentionMatrix) else np.atleast_2d(np.asarray(attention, dtype=np.float64))
    T, S = A.shape
    margin = 8 * max([len(t) for t in list(source_tokens) + list(target_tokens)] + [1]) + 10
    width, height = margin + S * cell, margin + T * cell
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-size="11" font-family="monospace">']
    for j, tok in enumerate(source_tokens):
        x = margin + j * cell + cell // 2
        parts.append(f'<text x="{x}" y="{margin - 4}" transform="rotate(-90 {x} {margin - 4})">{escape(tok)}</text>')
    for i, tok in enumerate(target_tokens):
        parts.append(f'<text x="2" y="{margin + i * cell + cell * 2 // 3}">{escape(tok)}</text>')
        for j in range(S):
            shade = int(round(255 * (1 - A[i, j])))
            parts.append(
                f'<rect x="{margin + j * cell}" y="{margin + i * cell}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},{shade})"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# corpus evaluation report
# ---------------------------------------------------------------------------

METRICS = ("bleu", "edit", "length")


@dataclass
class EvalReport:
    examples: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def aggregate(examples: Sequence[dict], metrics: Sequence[str] = METRICS, max_n: int = 4) -> dict:
    """Corpus aggregates recomputed from the per-example records alone."""
    n = len(examples)
    agg: dict = {"num_examples": n}
    if not n:
        return agg
    if "bleu" in metrics:
        stats = np.sum([e["bleu_stats"] for e in examples], axis=0)
        agg["bleu"] = _bleu_from_stats(np.asarray(stats), max_n, smooth=False)
    if "edit" in metrics:
        for key in ("distance", "insertions", "deletions", "substitutions"):
            agg[f"total_{key}"] = sum(e["edit"][key] for e in examples)
        agg["mean_edit_distance"] = agg["total_distance"] / n
        subs = Counter()
        for e in examples:
            subs.update((a, b) for a, b in e["edit"]["substituted"])
        agg["top_substitutions"] = [[a, b, c] for (a, b), c in sorted(subs.items(), key=lambda kv: (-kv[1], kv[0]))[:20]]
    if "length" in metrics:
        mean_hyp = sum(e["decoded_length"] for e in examples) / n
        mean_ref = sum(e["reference_length"] for e in examples) / n
        agg["mean_decoded_length"] = mean_hyp
        agg["mean_reference_length"] = mean_ref
        agg["length_ratio"] = mean_hyp / mean_ref if mean_ref else None
    return agg


def evaluate(
    decoded: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    metrics: Sequence[str] = METRICS,
    max_n: int = 4,
) -> EvalReport:
    if len(decoded) != len(references):
        raise ValueError(f"{len(decoded)} decoded outputs but {len(references)} references")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    examples = []
    for hyp, ref in zip(decoded, references):
        record: dict = {"decoded_length": len(hyp), "reference_length": len(ref)}
        if "bleu" in metrics:
            record["bleu_stats"] = _bleu_stats(hyp, ref, max_n).tolist()
            record["sentence_bleu"] = sentence_bleu(hyp, ref, max_n)
        if "edit" in metrics:
            ops = edit_operations(hyp, ref)
            dist = edit_distance(hyp, ref)
            record["edit"] = dict(dist._asdict(), substituted=[[a, b] for op, a, b in ops if op == "sub"])
        examples.append(record)
    return EvalReport(examples, aggregate(examples, metrics, max_n))
