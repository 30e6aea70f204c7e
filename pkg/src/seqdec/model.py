"""Next-token model interface and the deterministic reference models."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from seqdec.errors import ConfigurationError, FixtureCoverageError
from seqdec.textprep import EOS_ID, SOS_ID, Vocabulary


@dataclass(frozen=True, eq=False)
class StepOutput:
    """Next-token log-probabilities plus the attention row used to produce them."""

    logprobs: np.ndarray
    attention_row: np.ndarray

    def __post_init__(self):
        for name in ("logprobs", "attention_row"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def check(self, tol: float = 1e-6) -> None:
        """Assert the normalization contract."""
        total = float(np.logaddexp.reduce(self.logprobs))
        if abs(total) > tol:
            raise ValueError(f"logprobs not normalized: logsumexp = {total}")
        row = self.attention_row
        if row.size and (np.any(row < 0) or abs(row.sum() - 1.0) > tol):
            raise ValueError("attention row is not a probability distribution")

    def __eq__(self, other):
        if not isinstance(other, StepOutput):
            return NotImplemented
        return (
            np.array_equal(self.logprobs, other.logprobs)
            and np.array_equal(self.attention_row, other.attention_row)
        )

    __hash__ = None


@runtime_checkable
class ConditionalSequenceModel(Protocol):
    """Anything that can score p(y_t | X, y_<t).

    ``step`` must be pure: identical ``(source, prefix)`` arguments give
    identical outputs. ``prefix`` always starts with ``<sos>``.
    """

    vocab: Vocabulary

    @property
    def vocab_size(self) -> int: ...

    def step(self, source: Sequence[int], prefix: Sequence[int]) -> StepOutput: ...


def copy_step(source: Sequence[int], prefix: Sequence[int], epsilon: float, vocab_size: int) -> StepOutput:
    """Noisy copy channel: emit ``source[t]`` (or ``<eos>`` past the end) with probability ``1 - epsilon``.

    The remaining mass is spread evenly over the other ``vocab_size - 1``
    tokens, specials included. Attention is one-hot on
    ``min(t, len(source) - 1)``.
    """
    if not 0.0 <= epsilon < 0.5:
        raise ConfigurationError(f"epsilon must lie in [0, 0.5), got {epsilon}")
    if not source:
        raise ValueError("copy model needs a non-empty source")
    if not prefix or prefix[0] != SOS_ID:
        raise ValueError("prefix must begin with <sos>")
    t = len(prefix) - 1
    S = len(source)
    target = source[t] if t < S else EOS_ID
    with np.errstate(divide="ignore"):
        logprobs = np.full(vocab_size, math.log(epsilon / (vocab_size - 1)) if epsilon > 0 else -np.inf)
    logprobs[target] = math.log1p(-epsilon)
    attention = np.zeros(S)
    attention[min(t, S - 1)] = 1.0
    return StepOutput(logprobs, attention)


class CopyChannelModel:
    """Monotone copy model with analytic step distributions."""

    def __init__(self, vocab: Vocabulary, epsilon: float = 0.1):
        if not 0.0 <= epsilon < 0.5:
            raise ConfigurationError(f"epsilon must lie in [0, 0.5), got {epsilon}")
        self.vocab = vocab
        self.epsilon = float(epsilon)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def step(self, source: Sequence[int], prefix: Sequence[int]) -> StepOutput:
        return copy_step(tuple(source), tuple(prefix), self.epsilon, len(self.vocab))

    def __repr__(self):
        return f"CopyChannelModel(epsilon={self.epsilon}, vocab_size={self.vocab_size})"


class TableModel:
    """Explicit lookup table keyed by ``(source ids, prefix ids)``.

    Probability vectors must sum to one within 1e-9; they are renormalized
    on construction.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        entries: Mapping[tuple[tuple[int, ...], tuple[int, ...]], tuple[Sequence[float], Sequence[float]]],
    ):
        self.vocab = vocab
        self._table: dict[tuple[tuple[int, ...], tuple[int, ...]], StepOutput] = {}
        V = len(vocab)
        for (source, prefix), (probs, attention) in entries.items():
            key = (tuple(int(i) for i in source), tuple(int(i) for i in prefix))
            p = np.asarray(probs, dtype=np.float64)
            if p.shape != (V,):
                raise ValueError(f"entry {key}: expected {V} probabilities, got {p.shape}")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"entry {key}: probabilities sum to {p.sum()!r}, not 1")
            p = p / p.sum()
            a = np.asarray(attention, dtype=np.float64)
            if a.shape != (len(key[0]),) and not (a.size == 0 and not key[0]):
                raise ValueError(f"entry {key}: attention row must have length {len(key[0])}")
            if a.size and (np.any(a < 0) or abs(a.sum() - 1.0) > 1e-6):
                raise ValueError(f"entry {key}: attention row is not a distribution")
            with np.errstate(divide="ignore"):
                self._table[key] = StepOutput(np.log(p), a)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def __len__(self) -> int:
        return len(self._table)

    def keys(self):
        return self._table.keys()

    def step(self, source: Sequence[int], prefix: Sequence[int]) -> StepOutput:
        key = (tuple(source), tuple(prefix))
        try:
            return self._table[key]
        except KeyError:
            raise FixtureCoverageError(*key) from None

    # -- fixture files ----------------------------------------------------

    def to_json(self) -> dict:
        vocab = self.vocab
        entries = []
        for (source, prefix), out in self._table.items():
            entries.append(
                {
                    "source": [vocab.token(i) for i in source],
                    "prefix": [vocab.token(i) for i in prefix],
                    "probs": np.exp(out.logprobs).tolist(),
                    "attention": out.attention_row.tolist(),
                }
            )
        return {"vocab": list(vocab.tokens), "entries": entries}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, doc: Mapping) -> "TableModel":
        vocab = Vocabulary(tuple(doc["vocab"]))
        entries = {}
        for n, entry in enumerate(doc["entries"]):
            try:
                source = tuple(vocab.index[t] for t in entry["source"])
                prefix = tuple(vocab.index[t] for t in entry["prefix"])
            except KeyError as exc:
                raise ValueError(f"entry {n}: token {exc.args[0]!r} not in fixture vocab") from None
            entries[(source, prefix)] = (entry["probs"], entry["attention"])
        return cls(vocab, entries)

    @classmethod
    def load(cls, path) -> "TableModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
