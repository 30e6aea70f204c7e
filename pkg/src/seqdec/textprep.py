"""Tokenization, vocabularies and byte-pair-encoding subwords."""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from seqdec.errors import ConfigurationError

PAD, UNK, SOS, EOS = "<pad>", "<unk>", "<sos>", "<eos>"
SPECIALS = (PAD, UNK, SOS, EOS)
PAD_ID, UNK_ID, SOS_ID, EOS_ID = range(4)

EOW = "</w>"
MERGES_HEADER = "#bpe merges v1"

_PUNCT = frozenset(string.punctuation) - {"'"} | {"'", "“", "”", "‘", "’"}
_CONTRACTIONS = ("n't", "'s", "'re", "'ve", "'ll", "'d", "'m")


# ---------------------------------------------------------------------------
# tokenization
# ---------------------------------------------------------------------------


def _split_contraction(word: str) -> list[str]:
    lower = word.lower()
    for suffix in _CONTRACTIONS:
        if lower.endswith(suffix) and len(word) > len(suffix):
            return [word[: -len(suffix)], word[-len(suffix):]]
    return [word]


def tokenize(text: str) -> list[str]:
    """Split ``text`` into word, punctuation and contraction tokens.

    Rules, applied per whitespace-delimited chunk: leading and trailing
    punctuation characters become one token each, then a trailing English
    contraction (``'s``, ``n't``, ``'ll`` ...) is split off the word.

    >>> tokenize("It's no use")
    ['It', "'s", 'no', 'use']
    """
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        start, end = 0, len(chunk)
        while start < end and chunk[start] in _PUNCT:
            lead.append(chunk[start])
            start += 1
        while end > start and chunk[end - 1] in _PUNCT:
            trail.append(chunk[end - 1])
            end -= 1
        tokens.extend(lead)
        if start < end:
            tokens.extend(_split_contraction(chunk[start:end]))
        tokens.extend(reversed(trail))
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens with spaces, reattaching contractions and closing punctuation."""
    out = ""
    for tok in tokens:
        attach = tok.lower() in _CONTRACTIONS or (len(tok) == 1 and tok in ".,!?;:)]}%")
        if out and not attach and not out.endswith(("(", "[", "{")):
            out += " "
        out += tok
    return out


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    """Dense token <-> id mapping whose first four ids are the special tokens."""

    tokens: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if tokens[:4] != SPECIALS:
            raise ConfigurationError(f"vocabulary must start with {SPECIALS}, got {tokens[:4]}")
        index = {tok: i for i, tok in enumerate(tokens)}
        if len(index) != len(tokens):
            raise ConfigurationError("duplicate tokens in vocabulary")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "index", index)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        """Specials followed by ``tokens`` in the given order (duplicates and specials dropped)."""
        extra = [t for t in dict.fromkeys(tokens) if t not in SPECIALS]
        return cls(SPECIALS + tuple(extra))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise IndexError(f"id {idx} out of range for vocabulary of size {len(self.tokens)}")
        return self.tokens[idx]

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines))


@dataclass(frozen=True)
class TokenSequence:
    """Vocabulary ids for one side of an example; ``role`` is "source" or "target"."""

    ids: tuple[int, ...]
    role: str = "source"

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __getitem__(self, i):
        return self.ids[i]


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Keep the ``max_size - 4`` most frequent tokens; ties go to the lexicographically smaller token."""
    if max_size < 4:
        raise ConfigurationError(f"max_size must be >= 4, got {max_size}")
    counts = Counter(tok for sent in corpus for tok in sent if tok not in SPECIALS)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(SPECIALS + tuple(tok for tok, _ in ranked[: max_size - 4]))


def encode(tokens: Iterable[str], vocab: Vocabulary, role: str = "source") -> TokenSequence:
    return TokenSequence(tuple(vocab.id(t) for t in tokens), role)


def decode(ids: Iterable[int], vocab: Vocabulary) -> list[str]:
    return [vocab.token(i) for i in ids]


# ---------------------------------------------------------------------------
# byte-pair encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BpeMerges:
    """Ordered merge operations; a pair's position in ``merges`` is its priority."""

    merges: tuple[tuple[str, str], ...] = ()
    ranks: Mapping[tuple[str, str], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        merges = tuple((str(a), str(b)) for a, b in self.merges)
        ranks = {pair: i for i, pair in enumerate(merges)}
        if len(ranks) != len(merges):
            raise ConfigurationError("duplicate merge pairs")
        object.__setattr__(self, "merges", merges)
        object.__setattr__(self, "ranks", ranks)

    def __len__(self) -> int:
        return len(self.merges)

    def save(self, path) -> None:
        lines = [MERGES_HEADER] + [f"{a} {b}" for a, b in self.merges]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BpeMerges":
        pairs = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line or line.startswith("#"):
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'left right', got {line!r}")
            pairs.append((parts[0], parts[1]))
        return cls(tuple(pairs))


def _merge_pair(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
            out.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def _initial_symbols(word: str) -> tuple[str, ...]:
    return tuple(word) + (EOW,)


def learn_bpe(corpus: Mapping[str, int], num_merges: int) -> BpeMerges:
    """Learn up to ``num_merges`` merges from a word-frequency mapping.

    Each word starts as its characters followed by a separate ``</w>``
    symbol. The most frequent adjacent pair is merged each round (ties go
    to the smallest ``(left, right)``); learning stops once no pair occurs
    at least twice.
    """
    if num_merges < 0:
        raise ConfigurationError(f"num_merges must be >= 0, got {num_merges}")
    words = {_initial_symbols(w): c for w, c in corpus.items() if w and c > 0}
    merges: list[tuple[str, str]] = []
    while len(merges) < num_merges:
        pairs: Counter = Counter()
        for symbols, freq in words.items():
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += freq
        if not pairs:
            break
        best, count = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
        if count < 2:
            break
        merges.append(best)
        merged: Counter = Counter()
        for symbols, freq in words.items():
            merged[_merge_pair(symbols, best)] += freq
        words = dict(merged)
    return BpeMerges(tuple(merges))


def apply_bpe(word: str, merges: BpeMerges) -> list[str]:
    """Segment ``word`` by applying the lowest-ranked applicable merge until none applies.

    The end-of-word marker always ends up on the final subword, so
    ``"".join(out)[:-len("</w>")] == word``.
    """
    if not word:
        return []
    symbols = _initial_symbols(word)
    ranks = merges.ranks
    while len(symbols) > 1:
        candidates = [ranks[p] for p in zip(symbols, symbols[1:]) if p in ranks]
        if not candidates:
            break
        symbols = _merge_pair(symbols, merges.merges[min(candidates)])
    if symbols[-1] == EOW and len(symbols) > 1:
        symbols = symbols[:-2] + (symbols[-2] + EOW,)
    return list(symbols)


def join_bpe(subwords: Sequence[str]) -> str:
    """Inverse of :func:`apply_bpe` for a single word."""
    text = "".join(subwords)
    return text[: -len(EOW)] if text.endswith(EOW) else text


def word_counts(sentences: Iterable[Sequence[str]]) -> Counter:
    return Counter(tok for sent in sentences for tok in sent)
