"""Greedy decoding, beam search, and an exhaustive-search oracle.

All three share :func:`expand`, so a hypothesis reached by any route carries
bitwise-identical scores. Ranking is by score descending, ties broken by the
lexicographically smaller id sequence.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from seqdec.errors import ConfigurationError
from seqdec.lm import NgramLm
from seqdec.model import ConditionalSequenceModel, StepOutput
from seqdec.scoring import (
    RepetitionState,
    ScoreConfig,
    apply_temperature,
    final_score,
    fuse_step,
    length_window,
    repetition_step,
    sibling_penalty,
)
from seqdec.textprep import EOS_ID, SOS_ID

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 10**7


@dataclass(frozen=True)
class Hypothesis:
    ids: tuple[int, ...] = (SOS_ID,)
    model_logprob: float = 0.0
    fused_score: float = 0.0
    attention_rows: tuple[tuple[float, ...], ...] = ()
    terminated: bool = False
    final_score: float = math.nan
    rep_state: RepetitionState = field(default=RepetitionState(), repr=False)

    @property
    def length(self) -> int:
        """Generated tokens, ``<eos>`` included."""
        return len(self.ids) - 1

    @property
    def output_ids(self) -> tuple[int, ...]:
        """Generated ids without ``<sos>`` and the terminal ``<eos>``."""
        body = self.ids[1:]
        return body[:-1] if self.terminated else body


@dataclass(frozen=True)
class DecodeResult:
    best: Hypothesis
    finalists: tuple[Hypothesis, ...]
    steps_taken: int

    @property
    def terminated(self) -> bool:
        return self.best.terminated


@dataclass(frozen=True)
class BeamConfig:
    k: int = 4
    max_steps: int = 50
    scoring: ScoreConfig = ScoreConfig()
    # stop once k hypotheses have terminated instead of running to max_steps
    stop_early: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"beam size must be >= 1, got {self.k}")
        if self.max_steps < 1:
            raise ConfigurationError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass(frozen=True, eq=False)
class Expansion:
    """Scores of every one-token extension of a hypothesis."""

    parent: Hypothesis
    output: StepOutput
    fused: np.ndarray
    rep_state: RepetitionState

    def child(self, token: int) -> Hypothesis:
        parent = self.parent
        return Hypothesis(
            ids=parent.ids + (int(token),),
            model_logprob=parent.model_logprob + float(self.output.logprobs[token]),
            fused_score=float(self.fused[token]),
            attention_rows=parent.attention_rows + (tuple(self.output.attention_row.tolist()),),
            terminated=token == EOS_ID,
            rep_state=self.rep_state,
        )


def _window(source: Sequence[int], config: ScoreConfig) -> Optional[tuple[int, int]]:
    if not config.window_enabled:
        return None
    return length_window(len(source), config.length_delta, config.length_ratio)


def expand(
    model: ConditionalSequenceModel,
    source: Sequence[int],
    hyp: Hypothesis,
    config: ScoreConfig,
    lm: Optional[NgramLm] = None,
    window: Optional[tuple[int, int]] = None,
) -> Expansion:
    """Score all children of ``hyp`` with the in-beam terms of ``config``.

    Terms that are switched off are skipped entirely rather than added as
    zero, so the identity configuration reproduces plain log-prob search
    bit for bit.
    """
    out = model.step(source, hyp.ids)
    step = apply_temperature(out.logprobs, config.temperature)
    if config.lm_weight > 0:
        if lm is None:
            raise ConfigurationError("lm_weight > 0 needs a language model")
        step = fuse_step(step, lm.logprob_vector(hyp.ids), config.lm_weight)
    if config.diversity_gamma > 0:
        step = step + sibling_penalty(out.logprobs, config.diversity_gamma)
    rep_state = hyp.rep_state
    if config.rep_penalty > 0:
        returned, rep_state = repetition_step(rep_state, out.attention_row, config.rep_threshold)
        if returned:
            step = step - config.rep_penalty
    fused = hyp.fused_score + step
    if window is not None:
        # the window bounds the target length, <eos> excluded
        lower, upper = window
        if hyp.length < lower or hyp.length >= upper:
            fused = fused.copy()
            if hyp.length < lower:
                fused[EOS_ID] = -np.inf
            if hyp.length >= upper:
                eos = fused[EOS_ID]
                fused[:] = -np.inf
                fused[EOS_ID] = eos
    return Expansion(hyp, out, fused, rep_state)


def _finalize(hyp: Hypothesis, config: ScoreConfig) -> Hypothesis:
    score = final_score(hyp.fused_score, hyp.length, hyp.attention_rows, config)
    return replace(hyp, final_score=score)


def _rank_key(score: float, ids: tuple[int, ...]):
    return (-score, ids)


def _select(finalists: list[Hypothesis], live: list[Hypothesis], config: ScoreConfig, steps: int) -> DecodeResult:
    ranked = sorted((_finalize(h, config) for h in finalists), key=lambda h: _rank_key(h.final_score, h.ids))
    if ranked:
        best = ranked[0]
    elif live:
        best = _finalize(min(live, key=lambda h: _rank_key(h.fused_score, h.ids)), config)
    else:
        best = _finalize(Hypothesis(fused_score=-math.inf, model_logprob=-math.inf), config)
    return DecodeResult(best, tuple(ranked), steps)


def greedy_decode(model: ConditionalSequenceModel, source: Sequence[int], max_steps: int) -> DecodeResult:
    """Follow the argmax token (lowest id on ties) until ``<eos>`` or ``max_steps``."""
    if max_steps < 1:
        raise ConfigurationError(f"max_steps must be >= 1, got {max_steps}")
    source = tuple(source)
    hyp = Hypothesis()
    steps = 0
    for steps in range(1, max_steps + 1):
        out = model.step(source, hyp.ids)
        token = int(np.argmax(out.logprobs))
        logp = float(out.logprobs[token])
        hyp = Hypothesis(
            ids=hyp.ids + (token,),
            model_logprob=hyp.model_logprob + logp,
            fused_score=hyp.fused_score + logp,
            attention_rows=hyp.attention_rows + (tuple(out.attention_row.tolist()),),
            terminated=token == EOS_ID,
        )
        if hyp.terminated:
            break
    hyp = replace(hyp, final_score=hyp.fused_score)
    return DecodeResult(hyp, (hyp,) if hyp.terminated else (), steps)


def beam_search(
    model: ConditionalSequenceModel,
    source: Sequence[int],
    config: BeamConfig,
    lm: Optional[NgramLm] = None,
    trace: Optional[list] = None,
) -> DecodeResult:
    """Beam search with terminated-hypothesis collection and final re-ranking.

    Every live hypothesis is expanded over the whole vocabulary. Children
    ending in ``<eos>`` move straight to the finalists without taking a
    beam slot, and the best ``k`` of the rest stay live. Finalists are
    re-ranked by the final score. If nothing terminates within
    ``max_steps``, the best live hypothesis is returned unterminated.

    If ``trace`` is a list, the live beam after each step is appended to it.
    """
    source = tuple(source)
    scoring = config.scoring
    window = _window(source, scoring)
    horizon = config.max_steps if window is None else min(config.max_steps, window[1] + 1)
    k = config.k

    live = [Hypothesis()]
    finalists: list[Hypothesis] = []
    steps = 0
    for steps in range(1, horizon + 1):
        candidates = []
        for hyp in live:
            exp = expand(model, source, hyp, scoring, lm, window)
            fused = exp.fused
            if np.isfinite(fused[EOS_ID]):
                finalists.append(exp.child(EOS_ID))
            idx = np.flatnonzero(np.isfinite(fused))
            idx = idx[idx != EOS_ID]
            # only this parent's k best children can survive pruning
            top = idx[np.lexsort((idx, -fused[idx]))[:k]]
            candidates.extend((float(fused[u]), hyp.ids + (int(u),), exp, int(u)) for u in top)
        candidates.sort(key=lambda c: _rank_key(c[0], c[1]))
        live = [exp.child(u) for _, _, exp, u in candidates[:k]]
        if trace is not None:
            trace.append(tuple(live))
        if not live:
            break
        if config.stop_early and len(finalists) >= k:
            break
    logger.debug("beam search: %d steps, %d finalists", steps, len(finalists))
    return _select(finalists, live, scoring, steps)


def exhaustive_decode(
    model: ConditionalSequenceModel,
    source: Sequence[int],
    max_steps: int,
    scoring: ScoreConfig = ScoreConfig(),
    lm: Optional[NgramLm] = None,
) -> DecodeResult:
    """Score every ``<eos>``-terminated sequence of length <= ``max_steps``; return the best.

    Children with ``-inf`` score (zero probability or outside the length
    window) are not explored further.
    """
    if max_steps < 1:
        raise ConfigurationError(f"max_steps must be >= 1, got {max_steps}")
    size = float(model.vocab_size) ** max_steps
    if size > EXHAUSTIVE_LIMIT:
        raise ConfigurationError(
            f"exhaustive search over {model.vocab_size}^{max_steps} = {size:.3g} sequences exceeds {EXHAUSTIVE_LIMIT:.0e}"
        )
    source = tuple(source)
    window = _window(source, scoring)
    horizon = max_steps if window is None else min(max_steps, window[1] + 1)
    finalists: list[Hypothesis] = []
    frontier = [Hypothesis()]
    steps = 0
    for steps in range(1, horizon + 1):
        nxt = []
        for hyp in frontier:
            exp = expand(model, source, hyp, scoring, lm, window)
            if np.isfinite(exp.fused[EOS_ID]):
                finalists.append(exp.child(EOS_ID))
            nxt.extend(exp.child(int(u)) for u in np.flatnonzero(np.isfinite(exp.fused)) if u != EOS_ID)
        frontier = nxt
        if not frontier:
            break
    return _select(finalists, frontier, scoring, steps)


def score_sequence(
    model: ConditionalSequenceModel,
    source: Sequence[int],
    target: Sequence[int],
    scoring: ScoreConfig = ScoreConfig(),
    lm: Optional[NgramLm] = None,
) -> Hypothesis:
    """Force-decode ``target`` (without ``<sos>``/``<eos>``) and return it finalized.

    The score is exactly what beam search would assign to the same
    sequence; a sequence the search could never produce scores ``-inf``.
    """
    source = tuple(source)
    window = _window(source, scoring)
    hyp = Hypothesis()
    for token in tuple(target) + (EOS_ID,):
        hyp = expand(model, source, hyp, scoring, lm, window).child(int(token))
        if not math.isfinite(hyp.fused_score):
            break
    if not math.isfinite(hyp.fused_score):
        return replace(hyp, final_score=-math.inf)
    return _finalize(hyp, scoring)


def decode_corpus(
    model: ConditionalSequenceModel,
    sources: Sequence[Sequence[int]],
    config: BeamConfig,
    parallelism: int = 1,
    lm: Optional[NgramLm] = None,
) -> list[DecodeResult]:
    """Beam-decode every source; results are aligned with ``sources`` whatever the parallelism."""
    if parallelism < 1:
        raise ConfigurationError(f"parallelism must be >= 1, got {parallelism}")
    sources = [tuple(s) for s in sources]
    if parallelism == 1 or len(sources) <= 1:
        return [beam_search(model, s, config, lm) for s in sources]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda s: beam_search(model, s, config, lm), sources))
