"""Command-line entry point: ``seqdec <command> ...``.

Exit codes: 0 success, 1 data or I/O error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from seqdec import diagnostics
from seqdec.decoder import BeamConfig, DecodeResult, Hypothesis, decode_corpus
from seqdec.errors import ConfigurationError
from seqdec.lm import NgramLm, perplexity, train
from seqdec.model import CopyChannelModel, TableModel
from seqdec.scoring import ScoreConfig
from seqdec.textprep import (
    BpeMerges,
    Vocabulary,
    apply_bpe,
    build_vocab,
    decode,
    encode,
    learn_bpe,
    tokenize,
    word_counts,
)

logger = logging.getLogger("seqdec")


class DataError(Exception):
    """Bad input data; reported with exit code 1."""


@dataclass(frozen=True)
class CorpusRecord:
    source: str
    target: Optional[str] = None


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def read_text_corpus(path, field: Optional[str] = None) -> list[list[str]]:
    """Tokenized sentences from plain text, or from one field of a JSONL file."""
    out = []
    for lineno, line in enumerate(_read_lines(path), 1):
        if field is None:
            out.append(tokenize(line))
            continue
        if not line.strip():
            continue
        try:
            value = json.loads(line)[field]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise DataError(f"{path}:{lineno}: expected a JSON object with a {field!r} field") from None
        out.append(tokenize(value or ""))
    return out


def read_records(path) -> list[CorpusRecord]:
    records = []
    for lineno, line in enumerate(_read_lines(path), 1):
        try:
            obj = json.loads(line)
            source = obj["source"]
            target = obj.get("target")
            if not isinstance(source, str) or not (target is None or isinstance(target, str)):
                raise TypeError
        except (json.JSONDecodeError, KeyError, TypeError, AttributeError):
            raise DataError(f"{path}:{lineno}: expected {{\"source\": str, \"target\": str?}}") from None
        if not tokenize(source):
            raise DataError(f"{path}:{lineno}: empty source")
        records.append(CorpusRecord(source, target))
    return records


def read_outputs(path) -> list[list[str]]:
    """Token lists from decode output (JSONL) or from plain text lines."""
    out = []
    for lineno, line in enumerate(_read_lines(path), 1):
        stripped = line.lstrip()
        if stripped.startswith("{"):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise DataError(f"{path}:{lineno}: malformed JSON") from None
            if "hypotheses" in obj:
                hyps = obj["hypotheses"]
                out.append(list(hyps[0]["tokens"]) if hyps else [])
            elif "target" in obj:
                out.append(tokenize(obj["target"] or ""))
            else:
                raise DataError(f"{path}:{lineno}: JSON line has neither 'hypotheses' nor 'target'")
        else:
            out.append(tokenize(line))
    return out


def load_model(descriptor: str, records: list[CorpusRecord], vocab_path: Optional[str]):
    kind, _, arg = descriptor.partition(":")
    if kind == "copy":
        try:
            epsilon = float(arg) if arg else 0.1
        except ValueError:
            raise ConfigurationError(f"bad copy epsilon {arg!r}") from None
        if vocab_path:
            vocab = Vocabulary.load(vocab_path)
        else:
            vocab = build_vocab([tokenize(r.source) for r in records], max_size=sys.maxsize)
        return CopyChannelModel(vocab, epsilon)
    if kind == "table":
        if not arg:
            raise ConfigurationError("table model needs a fixture path: table:<path>")
        try:
            return TableModel.load(arg)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot load table fixture {arg}: {exc}") from None
    raise ConfigurationError(f"unknown model {descriptor!r}; expected copy:<epsilon> or table:<path>")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), file=sys.stderr)


def cmd_vocab_build(args) -> int:
    corpus = read_text_corpus(args.corpus, args.field)
    vocab = build_vocab(corpus, args.max_size)
    vocab.save(args.out)
    _summary(vocab_size=len(vocab), sentences=len(corpus))
    return 0


def cmd_bpe_learn(args) -> int:
    corpus = read_text_corpus(args.corpus, args.field)
    counts = word_counts(corpus)
    if not counts:
        raise DataError(f"{args.corpus}: empty corpus")
    merges = learn_bpe(counts, args.merges)
    merges.save(args.out)
    _summary(merges=len(merges), word_types=len(counts))
    return 0


def cmd_bpe_apply(args) -> int:
    merges = BpeMerges.load(args.merges)
    lines = [" ".join(sub for word in tokenize(line) for sub in apply_bpe(word, merges)) for line in _read_lines(args.corpus)]
    _write("".join(line + "\n" for line in lines), args.out)
    return 0


def _encode_corpus(corpus, vocab):
    return [encode(sent, vocab, role="target").ids for sent in corpus]


def cmd_lm_train(args) -> int:
    corpus = read_text_corpus(args.corpus, args.field)
    if not corpus:
        raise DataError(f"{args.corpus}: empty corpus")
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
    else:
        vocab = build_vocab(corpus, max_size=sys.maxsize)
        vocab.save(args.out + ".vocab")
    ids = _encode_corpus(corpus, vocab)
    lm = train(ids, vocab, order=args.order, discount=args.discount)
    lm.save(args.out)
    stats = {"order": lm.order, "vocab_size": len(vocab), "train_perplexity": perplexity(lm, ids)}
    if args.heldout:
        heldout = read_text_corpus(args.heldout, args.field)
        if heldout:
            stats["heldout_perplexity"] = perplexity(lm, _encode_corpus(heldout, vocab))
    _summary(**stats)
    return 0


def cmd_lm_score(args) -> int:
    vocab = Vocabulary.load(args.vocab or args.lm + ".vocab")
    lm = NgramLm.load(args.lm, vocab)
    corpus = read_text_corpus(args.corpus, args.field)
    if not corpus:
        raise DataError(f"{args.corpus}: empty corpus")
    ids = _encode_corpus(corpus, vocab)
    print(json.dumps({"perplexity": perplexity(lm, ids), "sentences": len(ids), "support_size": lm.support_size}))
    return 0


def score_config_from_args(args) -> ScoreConfig:
    window = args.len_delta > 0 or args.len_ratio > 0 or args.length_window
    return ScoreConfig(
        lm_weight=args.lm_weight,
        length_bonus=args.length_bonus,
        temperature=args.temperature,
        diversity_gamma=args.diversity_gamma,
        coverage_weight=args.coverage_weight,
        coverage_floor=args.coverage_floor,
        rep_threshold=args.rep_threshold,
        rep_penalty=args.rep_penalty,
        length_delta=args.len_delta,
        length_ratio=args.len_ratio,
        length_normalize=args.length_norm,
        window_enabled=bool(window),
    )


def _hyp_record(hyp: Hypothesis, vocab: Vocabulary) -> dict:
    return {
        "tokens": decode(hyp.output_ids, vocab),
        "terminated": hyp.terminated,
        "model_logprob": hyp.model_logprob,
        "score": hyp.final_score,
    }


def decode_record(source_tokens, result: DecodeResult, vocab: Vocabulary, nbest: int, emit_attention: bool) -> dict:
    ranked = list(result.finalists[:nbest]) if result.finalists else [result.best]
    record = {"source": source_tokens, "hypotheses": [_hyp_record(h, vocab) for h in ranked]}
    if emit_attention:
        record["attention"] = [list(row) for row in result.best.attention_rows]
    return record


def cmd_decode(args) -> int:
    records = read_records(args.input)
    model = load_model(args.model, records, args.vocab)
    vocab = model.vocab
    lm = None
    if args.lm:
        lm_vocab_path = args.lm_vocab or args.lm + ".vocab"
        # an LM trained against --vocab has no sidecar; assume it shares the model vocabulary
        lm_vocab = Vocabulary.load(lm_vocab_path) if args.lm_vocab or os.path.exists(lm_vocab_path) else vocab
        if lm_vocab != vocab:
            raise DataError("language model vocabulary differs from the model vocabulary")
        lm = NgramLm.load(args.lm, vocab)
    elif args.lm_weight > 0:
        raise ConfigurationError("--lm-weight needs --lm")
    config = BeamConfig(k=args.beam_size, max_steps=args.max_steps, scoring=score_config_from_args(args), stop_early=args.stop_early)
    sources = [tokenize(r.source) for r in records]
    ids = [encode(toks, vocab).ids for toks in sources]
    start = time.perf_counter()
    results = decode_corpus(model, ids, config, parallelism=args.parallelism, lm=lm)
    logger.info("decoded %d sources in %.3fs", len(ids), time.perf_counter() - start)
    lines = []
    for n, (toks, result) in enumerate(zip(sources, results)):
        lines.append(json.dumps(decode_record(toks, result, vocab, args.nbest or args.beam_size, args.emit_attention)))
        if args.svg_dir:
            Path(args.svg_dir).mkdir(parents=True, exist_ok=True)
            target = decode(result.best.ids[1:], vocab)
            svg = diagnostics.attention_svg(result.best.attention_rows or [[0.0] * len(toks)], toks, target)
            (Path(args.svg_dir) / f"{n:05d}.svg").write_text(svg, encoding="utf-8")
    _write("".join(line + "\n" for line in lines), args.out)
    return 0


def cmd_evaluate(args) -> int:
    decoded = read_outputs(args.decoded)
    references = read_outputs(args.reference)
    if len(decoded) != len(references):
        raise DataError(f"line count mismatch: {len(decoded)} decoded vs {len(references)} reference lines")
    metrics = diagnostics.METRICS if args.metric == "all" else (args.metric,)
    report = diagnostics.evaluate(decoded, references, metrics, max_n=args.max_n)
    _write(report.to_json() + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab-build", help="build a truncated vocabulary")
    p.add_argument("corpus")
    p.add_argument("--max-size", type=int, required=True)
    p.add_argument("--field", help="read this field of a JSONL corpus instead of plain text")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vocab_build)

    p = sub.add_parser("bpe-learn", help="learn BPE merges")
    p.add_argument("corpus")
    p.add_argument("--merges", type=_nonneg_int, required=True)
    p.add_argument("--field")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="segment a text corpus with learned merges")
    p.add_argument("corpus")
    p.add_argument("--merges", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bpe_apply)

    p = sub.add_parser("lm-train", help="train an n-gram language model")
    p.add_argument("corpus")
    p.add_argument("--vocab", help="vocabulary file; built from the corpus (and written to OUT.vocab) if omitted")
    p.add_argument("--order", type=_positive_int, default=3)
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--heldout")
    p.add_argument("--field")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("lm-score", help="perplexity of a corpus under a trained LM")
    p.add_argument("corpus")
    p.add_argument("--lm", required=True)
    p.add_argument("--vocab")
    p.add_argument("--field")
    p.set_defaults(func=cmd_lm_score)

    p = sub.add_parser("decode", help="beam-decode a JSONL corpus")
    p.add_argument("input")
    p.add_argument("--model", required=True, help="copy:<epsilon> or table:<fixture.json>")
    p.add_argument("--vocab", help="vocabulary for the copy model (default: built from the sources)")
    p.add_argument("--out")
    p.add_argument("--beam-size", type=_positive_int, default=4)
    p.add_argument("--max-steps", type=_positive_int, default=50)
    p.add_argument("--nbest", type=_positive_int)
    p.add_argument("--parallelism", type=_positive_int, default=1)
    p.add_argument("--stop-early", action="store_true")
    p.add_argument("--lm")
    p.add_argument("--lm-vocab")
    defaults = ScoreConfig()
    p.add_argument("--lm-weight", type=float, default=defaults.lm_weight)
    p.add_argument("--length-bonus", type=float, default=defaults.length_bonus)
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--coverage-weight", type=float, default=defaults.coverage_weight)
    p.add_argument("--coverage-floor", type=float, default=defaults.coverage_floor)
    p.add_argument("--rep-threshold", type=float, default=defaults.rep_threshold)
    p.add_argument("--rep-penalty", type=float, default=defaults.rep_penalty)
    p.add_argument("--diversity-gamma", type=float, default=defaults.diversity_gamma)
    p.add_argument("--temperature", type=float, default=defaults.temperature)
    p.add_argument("--len-delta", type=float, default=defaults.length_delta)
    p.add_argument("--len-ratio", type=float, default=defaults.length_ratio)
    p.add_argument("--length-window", action="store_true", help="enforce the window even when delta = ratio = 0")
    p.add_argument("--emit-attention", action="store_true")
    p.add_argument("--svg-dir", help="write an attention heatmap per example")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="score decoded output against references")
    p.add_argument("decoded")
    p.add_argument("reference")
    p.add_argument("--metric", choices=diagnostics.METRICS + ("all",), default="all")
    p.add_argument("--max-n", type=_positive_int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SEQDEC_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "length_norm", False) and args.length_bonus > 0:
        parser.error("--length-norm and --length-bonus are mutually exclusive")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        parser.error(str(exc))
    except (DataError, ValueError, OSError) as exc:
        print(f"seqdec: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
