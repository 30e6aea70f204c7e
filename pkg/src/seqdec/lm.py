"""Count-based n-gram language model with interpolated absolute discounting.

    p_n(w | c) = max(N(c, w) - d, 0) / N(c)
                 + d * distinct(c) / N(c) * p_{n-1}(w | c[1:])
    p_0(w)     = 1 / |support|

Contexts never seen in training back off wholesale to the shorter context.
The support is every vocabulary id except ``<pad>`` and ``<sos>``, which
are never predicted; their log-probability is ``-inf``.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from seqdec.errors import ConfigurationError
from seqdec.textprep import EOS_ID, PAD_ID, SOS_ID, Vocabulary

HEADER_PREFIX = "ngramlm v1"
UNPREDICTED = frozenset({PAD_ID, SOS_ID})


class NgramLm:
    """Immutable after :func:`train` (or :meth:`load`)."""

    def __init__(self, vocab: Vocabulary, order: int = 3, discount: float = 0.75, counts=None):
        if order < 1:
            raise ConfigurationError(f"order must be >= 1, got {order}")
        if not 0.0 < discount < 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1), got {discount}")
        self.vocab = vocab
        self.order = int(order)
        self.discount = float(discount)
        # counts[level][context][token], context has level - 1 ids
        self.counts: list[dict[tuple[int, ...], Counter]] = [dict() for _ in range(order + 1)]
        if counts is not None:
            for level, table in enumerate(counts):
                for ctx, succ in table.items():
                    self.counts[level][tuple(ctx)] = Counter(succ)
        self._totals = [{c: sum(s.values()) for c, s in table.items()} for table in self.counts]
        self.support_size = len(vocab) - len(UNPREDICTED)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _prob(self, token: int, context: tuple[int, ...]) -> float:
        level = len(context) + 1
        lower = 1.0 / self.support_size if level == 1 else self._prob(token, context[1:])
        total = self._totals[level].get(context, 0)
        if total == 0:
            return lower
        succ = self.counts[level][context]
        d = self.discount
        return max(succ.get(token, 0) - d, 0.0) / total + d * len(succ) / total * lower

    def prob(self, context: Sequence[int], token: int) -> float:
        if not 0 <= token < len(self.vocab):
            raise IndexError(f"token id {token} out of range for vocabulary of size {len(self.vocab)}")
        if token in UNPREDICTED:
            return 0.0
        ctx = self.context(context)
        return self._prob(token, ctx)

    def logprob(self, context: Sequence[int], token: int) -> float:
        p = self.prob(context, token)
        return math.log(p) if p > 0 else -math.inf

    def logprob_vector(self, history: Sequence[int]) -> np.ndarray:
        """Log-probabilities of every vocabulary id after ``history``."""
        ctx = self.context(history)
        out = np.full(len(self.vocab), -np.inf)
        for w in range(len(self.vocab)):
            if w not in UNPREDICTED:
                out[w] = math.log(self._prob(w, ctx))
        return out

    def context(self, history: Sequence[int]) -> tuple[int, ...]:
        """Last ``order - 1`` ids of ``history``, left-padded with ``<sos>``."""
        n = self.order - 1
        if n == 0:
            return ()
        hist = tuple(history)[-n:]
        return (SOS_ID,) * (n - len(hist)) + hist

    def sequence_logprob(self, ids: Sequence[int]) -> float:
        """Chain-rule log-probability of ``ids`` followed by ``<eos>``."""
        return sum(self.logprob(ctx, tok) for ctx, tok in self._events(ids))

    def _events(self, ids: Sequence[int]):
        padded = (SOS_ID,) * (self.order - 1) + tuple(ids) + (EOS_ID,)
        n = self.order - 1
        for i in range(n, len(padded)):
            yield padded[i - n : i], padded[i]

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        tok = self.vocab.token
        lines = [f"{HEADER_PREFIX} order={self.order} discount={self.discount!r}"]
        for level in range(1, self.order + 1):
            for ctx in sorted(self.counts[level]):
                succ = self.counts[level][ctx]
                ctx_text = " ".join(tok(i) for i in ctx)
                for w in sorted(succ):
                    lines.append(f"{level}\t{ctx_text}\t{tok(w)}\t{succ[w]}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, vocab: Vocabulary) -> "NgramLm":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith(HEADER_PREFIX):
            raise ValueError(f"{path}: missing '{HEADER_PREFIX}' header")
        params = dict(field.split("=", 1) for field in lines[0][len(HEADER_PREFIX):].split())
        order = int(params["order"])
        counts: list[dict] = [defaultdict(Counter) for _ in range(order + 1)]
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            try:
                level_s, ctx_s, tok_s, count_s = line.split("\t")
                ctx = tuple(vocab.index[t] for t in ctx_s.split(" ") if t)
                counts[int(level_s)][ctx][vocab.index[tok_s]] = int(count_s)
            except (ValueError, KeyError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed count line ({exc})") from None
        return cls(vocab, order, float(params["discount"]), counts)

    def __eq__(self, other):
        if not isinstance(other, NgramLm):
            return NotImplemented
        return (
            self.vocab == other.vocab
            and self.order == other.order
            and self.discount == other.discount
            and self.counts == other.counts
        )

    __hash__ = None


def train(corpus: Iterable[Sequence[int]], vocab: Vocabulary, order: int = 3, discount: float = 0.75) -> NgramLm:
    """Count n-grams of every level 1..order over ``<sos>``-padded, ``<eos>``-terminated sentences."""
    sentences = [tuple(s) for s in corpus]
    if not sentences:
        raise ValueError("cannot train a language model on an empty corpus")
    if order < 1:
        raise ConfigurationError(f"order must be >= 1, got {order}")
    V = len(vocab)
    counts: list[dict] = [defaultdict(Counter) for _ in range(order + 1)]
    for sent in sentences:
        if any(not 0 <= i < V for i in sent):
            raise IndexError("sentence contains ids outside the vocabulary")
        padded = (SOS_ID,) * (order - 1) + sent + (EOS_ID,)
        for i in range(order - 1, len(padded)):
            w = padded[i]
            for level in range(1, order + 1):
                counts[level][padded[i - level + 1 : i]][w] += 1
    return NgramLm(vocab, order, discount, counts)


def perplexity(lm: NgramLm, corpus: Iterable[Sequence[int]]) -> float:
    """exp of the negative mean log-probability per predicted token (``<eos>`` included)."""
    sentences = [tuple(s) for s in corpus]
    if not sentences:
        raise ValueError("perplexity of an empty corpus is undefined")
    total = sum(lm.sequence_logprob(s) for s in sentences)
    n = sum(len(s) + 1 for s in sentences)
    return math.exp(-total / n)
