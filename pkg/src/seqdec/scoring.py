"""Score terms composed by the decoder.

In-beam terms accumulate step by step (LM fusion, temperature, sibling
penalty, repetition penalty). Final terms re-rank finished hypotheses
(length normalization or bonus, coverage penalty). The length window is a
hard constraint applied while expanding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from seqdec.errors import ConfigurationError


@dataclass(frozen=True)
class ScoreConfig:
    """Decoding hyperparameters. All defaults together form the identity configuration."""

    lm_weight: float = 0.0
    length_bonus: float = 0.0
    temperature: float = 1.0
    diversity_gamma: float = 0.0
    coverage_weight: float = 0.0
    coverage_floor: float = 1e-10
    rep_threshold: float = 0.5
    rep_penalty: float = 0.0
    length_delta: float = 0.0
    length_ratio: float = 0.0
    length_normalize: bool = False
    window_enabled: bool = False

    def __post_init__(self):
        checks = [
            (self.lm_weight >= 0, "lm_weight must be >= 0"),
            (self.length_bonus >= 0, "length_bonus must be >= 0"),
            (self.temperature > 0, "temperature must be > 0"),
            (self.diversity_gamma >= 0, "diversity_gamma must be >= 0"),
            (self.coverage_weight >= 0, "coverage_weight must be >= 0"),
            (self.coverage_floor > 0, "coverage_floor must be > 0"),
            (0 < self.rep_threshold <= 1, "rep_threshold must lie in (0, 1]"),
            (self.rep_penalty >= 0, "rep_penalty must be >= 0"),
            (self.length_delta >= 0, "length_delta must be >= 0"),
            (self.length_ratio >= 0, "length_ratio must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)
        if self.length_normalize and self.length_bonus > 0:
            raise ConfigurationError("length normalization and length bonus are mutually exclusive")


@dataclass(frozen=True, eq=False)
class AttentionMatrix:
    """Row i holds the attention over source positions at decoder step i; shape (T, S)."""

    rows: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if rows.size and (np.any(rows < 0) or not np.allclose(rows.sum(axis=1), 1.0, atol=1e-6)):
            raise ValueError("attention rows must be non-negative and sum to 1")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], source_len: int | None = None) -> "AttentionMatrix":
        if len(rows) == 0:
            return cls(np.zeros((0, source_len or 0)))
        return cls(np.asarray(rows, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def column_sums(self) -> np.ndarray:
        return self.rows.sum(axis=0)


# ---------------------------------------------------------------------------
# in-beam terms
# ---------------------------------------------------------------------------


def fuse_step(step_logprob, lm_logprob, lm_weight: float):
    """Shallow fusion of one step: ``step + lm_weight * lm``. Works on scalars or arrays."""
    if lm_weight < 0:
        raise ConfigurationError(f"lm_weight must be >= 0, got {lm_weight}")
    return step_logprob + lm_weight * lm_logprob


def apply_temperature(logprobs, temperature: float) -> np.ndarray:
    """Renormalize ``exp(logprobs / temperature)``.

    Equivalent to ``log_softmax(logits / temperature)`` for any logits that
    produced ``logprobs``, because the softmax normalizer cancels.
    """
    if temperature <= 0:
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    logprobs = np.asarray(logprobs, dtype=np.float64)
    if temperature == 1.0:
        return logprobs
    scaled = logprobs / temperature
    return scaled - np.logaddexp.reduce(scaled)


def sibling_ranks(logprobs) -> np.ndarray:
    """0-based rank of each token among its siblings: descending log-prob, ties by lower id."""
    logprobs = np.asarray(logprobs)
    order = np.lexsort((np.arange(logprobs.size), -logprobs))
    ranks = np.empty(logprobs.size, dtype=np.int64)
    ranks[order] = np.arange(logprobs.size)
    return ranks


def sibling_penalty(logprobs, gamma: float) -> np.ndarray:
    """Per-token adjustment ``-gamma * (rank - 1)`` with 1-based ranks."""
    return -gamma * sibling_ranks(logprobs).astype(np.float64)


@dataclass(frozen=True)
class RepetitionState:
    """Source positions that have held over-threshold attention, and the previous step's position."""

    visited: frozenset = frozenset()
    previous: int | None = None


def peak_position(row, threshold: float) -> int | None:
    """The highest-weight source position if it reaches ``threshold`` (lowest index on ties)."""
    row = np.asarray(row)
    if row.size == 0:
        return None
    j = int(np.argmax(row))
    return j if row[j] >= threshold else None


def repetition_step(state: RepetitionState, row, threshold: float) -> tuple[bool, RepetitionState]:
    """Advance the tracker by one attention row.

    Returns whether this step re-attends to an earlier peak after attention
    had moved elsewhere, together with the updated state.
    """
    j = peak_position(row, threshold)
    if j is None:
        return False, RepetitionState(state.visited, None)
    returned = j in state.visited and j != state.previous
    return returned, RepetitionState(state.visited | {j}, j)


def repetition_penalty(attention_rows, threshold: float, penalty: float) -> float:
    """Total ``-penalty`` charged over all return events in ``attention_rows``."""
    if not 0 < threshold <= 1:
        raise ConfigurationError(f"threshold must lie in (0, 1], got {threshold}")
    if penalty < 0:
        raise ConfigurationError(f"penalty must be >= 0, got {penalty}")
    state = RepetitionState()
    total = 0.0
    for row in attention_rows:
        returned, state = repetition_step(state, row, threshold)
        if returned:
            total -= penalty
    return total


# ---------------------------------------------------------------------------
# final-score terms
# ---------------------------------------------------------------------------


def length_normalized(score: float, length: int) -> float:
    if length <= 0:
        raise ValueError("cannot length-normalize an empty hypothesis")
    return score / length


def length_bonus(score: float, length: int, beta: float) -> float:
    if beta < 0:
        raise ConfigurationError(f"beta must be >= 0, got {beta}")
    return score + beta * length


def coverage_penalty(attention, floor: float = 1e-10) -> float:
    """``sum_j log(min(sum_i A_ij, 1))`` with column sums clamped below at ``floor``."""
    A = attention.rows if isinstance(attention, AttentionMatrix) else np.asarray(attention, dtype=np.float64)
    if A.size == 0:
        return 0.0
    A = np.atleast_2d(A)
    sums = np.clip(A.sum(axis=0), floor, 1.0)
    return float(np.sum(np.log(sums)))


def length_window(source_len: int, delta: float, ratio: float) -> tuple[int, int]:
    """Allowed target lengths ``[lower, upper]``, ``<eos>`` not counted."""
    if source_len < 1:
        raise ValueError("source length must be >= 1")
    if delta < 0 or ratio < 0:
        raise ConfigurationError("delta and ratio must be >= 0")
    lower = math.floor(max(source_len - delta, (1 - ratio) * source_len))
    upper = math.ceil(max(source_len + delta, (1 + ratio) * source_len))
    return max(lower, 1), upper


def final_score(fused_score: float, length: int, attention_rows, config: ScoreConfig) -> float:
    """Re-ranking score of a finished hypothesis."""
    score = fused_score
    if config.length_normalize:
        score = length_normalized(score, length)
    elif config.length_bonus > 0:
        score = length_bonus(score, length, config.length_bonus)
    if config.coverage_weight > 0:
        score = score + config.coverage_weight * coverage_penalty(attention_rows, config.coverage_floor)
    return score
