"""Hand-built and random :class:`~seqdec.model.TableModel` fixtures.

Used by the test suite and handy for experimenting with scoring settings
from a REPL.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from seqdec.model import TableModel
from seqdec.textprep import EOS_ID, SOS_ID, Vocabulary


def _dist(vocab: Vocabulary, probs: dict[str, float]) -> list[float]:
    p = [0.0] * len(vocab)
    for tok, value in probs.items():
        p[vocab.index[tok]] = value
    return p


def _onehot(n: int, j: int) -> list[float]:
    row = [0.0] * n
    row[j] = 1.0
    return row


def random_table_model(
    rng: np.random.Generator,
    num_tokens: int = 3,
    max_steps: int = 5,
    source_len: int | None = None,
    alpha: float = 0.5,
) -> tuple[TableModel, tuple[int, ...]]:
    """A random model over ``num_tokens`` words plus ``<eos>``, covering every reachable prefix.

    Returns the model and the source it was built for. Every prefix of up to
    ``max_steps - 1`` words gets a Dirichlet(``alpha``) next-token
    distribution with non-zero ``<eos>`` mass and a Dirichlet attention row.
    """
    vocab = Vocabulary.from_tokens(f"w{i}" for i in range(num_tokens))
    words = list(range(4, 4 + num_tokens))
    S = source_len or int(rng.integers(2, 5))
    source = tuple(int(w) for w in rng.choice(words, size=S))
    effective = words + [EOS_ID]
    entries = {}
    for depth in range(max_steps):
        for body in itertools.product(words, repeat=depth):
            p = np.zeros(len(vocab))
            p[effective] = rng.dirichlet([alpha] * len(effective))
            p[effective] = np.maximum(p[effective], 1e-6)
            p /= p.sum()
            attention = rng.dirichlet([alpha] * S)
            entries[(source, (SOS_ID,) + body)] = (p, attention)
    return TableModel(vocab, entries), source


def delayed_reward_model() -> tuple[TableModel, tuple[int, ...], tuple[int, ...]]:
    """Greedy picks ``a`` (0.6) but the best full output is ``b c`` (0.4 vs 0.3).

    Returns ``(model, source, gold)`` where ``gold`` is the optimal output.
    """
    vocab = Vocabulary.from_tokens(["a", "b", "c", "d"])
    i = vocab.index
    source = (i["a"], i["b"])
    att0, att1 = [1.0, 0.0], [0.0, 1.0]
    table = {
        (): ({"a": 0.6, "b": 0.4}, att0),
        ("a",): ({"c": 0.5, "d": 0.5}, att1),
        ("a", "c"): ({"<eos>": 1.0}, att1),
        ("a", "d"): ({"<eos>": 1.0}, att1),
        ("b",): ({"c": 1.0}, att1),
        ("b", "c"): ({"<eos>": 1.0}, att1),
    }
    entries = {
        (source, (SOS_ID,) + tuple(i[t] for t in body)): (_dist(vocab, probs), att)
        for body, (probs, att) in table.items()
    }
    return TableModel(vocab, entries), source, (i["b"], i["c"])


def cyclic_model(max_steps: int = 6) -> tuple[TableModel, tuple[int, ...]]:
    """A model whose likeliest lineage loops ``a b`` forever while attention swings back and forth.

    After ``a b``, both loop tokens stay at 0.5 each and ``<eos>`` has zero
    mass, so with two beam slots the loop crowds out the weaker
    alternative ``c b c <eos>`` (prefix probability 0.1) unless the
    re-attention penalty is on. Every loop step from the third onwards
    returns attention to a previously peaked source column.
    """
    vocab = Vocabulary.from_tokens(["a", "b", "c"])
    a, b, c = (vocab.index[t] for t in "abc")
    source = (a, b)
    att = (_onehot(2, 0), _onehot(2, 1))
    entries = {}

    def put(body, probs, row):
        entries[(source, (SOS_ID,) + tuple(body))] = (_dist(vocab, probs), row)

    put((), {"a": 0.9, "c": 0.1}, att[0])
    put((a,), {"b": 1.0}, att[1])
    for depth in range(2, max_steps):
        for tail in itertools.product((a, b), repeat=depth - 2):
            put((a, b) + tail, {"a": 0.5, "b": 0.5}, att[depth % 2])
    put((c,), {"b": 1.0}, att[1])
    put((c, b), {"c": 1.0}, att[1])
    put((c, b, c), {"<eos>": 1.0}, att[1])
    return TableModel(vocab, entries), source


def ids(vocab: Vocabulary, text: str) -> tuple[int, ...]:
    return tuple(vocab.index[t] for t in text.split())


def tokens(vocab: Vocabulary, seq: Sequence[int]) -> str:
    return " ".join(vocab.token(i) for i in seq)
