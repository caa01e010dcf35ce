"""Text-generation quality metrics: BLEU, ROUGE, METEOR, embedding F1.

All metrics share one tokenizer (lowercase, whitespace split, outer
punctuation stripped) so that scores are comparable across rows of the
corpus report. Implementations follow the classical formulations; the
docstrings note the exact conventions for empty and degenerate inputs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingProviderConfig, embed_text

TABLE_ROWS = (
    "BLEU",
    "Unigram Precision",
    "Bigram Precision",
    "Trigram Precision",
    "4-gram Precision",
    "ROUGE-1",
    "ROUGE-2",
    "ROUGE-L",
    "ROUGE-LSum",
    "METEOR",
    "BERTScore-F1",
    "BERTScore-Precision",
    "BERTScore-Recall",
)


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    source_text: str

    def __len__(self) -> int:
        return len(self.tokens)


def _strip_outer_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> TokenSequence:
    """Lowercase, split on Unicode whitespace, strip outer punctuation.

    Tokens that are pure punctuation vanish; inner punctuation (hyphens,
    apostrophes) survives.
    """
    tokens = []
    for raw in text.lower().split():
        token = _strip_outer_punct(raw)
        if token:
            tokens.append(token)
    return TokenSequence(tokens=tuple(tokens), source_text=text)


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float


def _harmonic(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# BLEU


@dataclass(frozen=True)
class BleuReport:
    precisions: tuple[float, ...]
    bp: float
    bleu: float
    cand_len: int
    ref_len: int
    mode: str = "sentence"
    degenerate: bool = False

    @property
    def p1(self) -> float:
        return self.precisions[0]

    @property
    def p2(self) -> float:
        return self.precisions[1]

    @property
    def p3(self) -> float:
        return self.precisions[2]

    @property
    def p4(self) -> float:
        return self.precisions[3]


def _ngram_counts(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def _clipped_matches(candidate: tuple[str, ...], references: list[tuple[str, ...]], n: int):
    """Candidate n-gram count clipped per gram by the max count in any reference."""
    cand_counts = _ngram_counts(candidate, n)
    total = sum(cand_counts.values())
    if total == 0:
        return 0, 0
    max_ref: Counter = Counter()
    for ref in references:
        for gram, count in _ngram_counts(ref, n).items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    matched = sum(min(count, max_ref.get(gram, 0)) for gram, count in cand_counts.items())
    return matched, total


def _closest_ref_len(cand_len: int, ref_lens: list[int]) -> int:
    # Ties in distance go to the shorter reference.
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def _brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def _geometric_bleu(precisions: list[float], bp: float) -> float:
    if any(p == 0.0 for p in precisions):
        return 0.0
    return bp * math.exp(sum(math.log(p) for p in precisions) / len(precisions))


def bleu(
    candidate: TokenSequence,
    references: list[TokenSequence],
    max_n: int = 4,
    mode: str = "sentence",
    smoothing_eps: float = 0.0,
) -> BleuReport:
    """Modified n-gram precision BLEU with brevity penalty.

    Unsmoothed by default: any zero n-gram precision zeroes the score.
    A precision with zero denominator (candidate shorter than n) is 0.
    An empty candidate yields an all-zero degenerate report.
    """
    if not references:
        raise ValueError("at least one reference is required")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if mode not in ("sentence", "corpus"):
        raise ValueError(f"unknown mode: {mode!r}")
    return _bleu_pooled([(candidate, references)], max_n, mode, smoothing_eps)


def bleu_corpus(
    pairs: list[tuple[TokenSequence, list[TokenSequence]]],
    max_n: int = 4,
    smoothing_eps: float = 0.0,
) -> BleuReport:
    """Pool clipped counts and lengths over all pairs before dividing."""
    if not pairs:
        raise ValueError("at least one candidate/reference pair is required")
    return _bleu_pooled(pairs, max_n, "corpus", smoothing_eps)


def _bleu_pooled(pairs, max_n: int, mode: str, smoothing_eps: float) -> BleuReport:
    matched = [0] * max_n
    totals = [0] * max_n
    cand_len = 0
    ref_len = 0
    for candidate, references in pairs:
        if not references:
            raise ValueError("every candidate needs at least one reference")
        cand_len += len(candidate)
        ref_len += _closest_ref_len(len(candidate), [len(r) for r in references])
        ref_tokens = [r.tokens for r in references]
        for n in range(1, max_n + 1):
            m, t = _clipped_matches(candidate.tokens, ref_tokens, n)
            matched[n - 1] += m
            totals[n - 1] += t
    precisions = []
    for m, t in zip(matched, totals):
        if t == 0:
            precisions.append(0.0)
        elif m == 0 and smoothing_eps > 0.0:
            precisions.append(smoothing_eps / t)
        else:
            precisions.append(m / t)
    bp = _brevity_penalty(cand_len, ref_len)
    return BleuReport(
        precisions=tuple(precisions),
        bp=bp,
        bleu=_geometric_bleu(precisions, bp),
        cand_len=cand_len,
        ref_len=ref_len,
        mode=mode,
        degenerate=cand_len == 0,
    )


# ---------------------------------------------------------------------------
# ROUGE


def rouge_n(candidate: TokenSequence, references: list[TokenSequence], n: int) -> ScoreTriple:
    """Clipped n-gram recall/precision against the pooled references.

    Recall divides by the total reference gram count; precision divides by
    the candidate gram count times the number of references, mirroring the
    summed numerator. Zero denominators produce zero components.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not references:
        raise ValueError("at least one reference is required")
    cand_counts = _ngram_counts(candidate.tokens, n)
    cand_total = sum(cand_counts.values())
    matched = 0
    ref_total = 0
    for ref in references:
        ref_counts = _ngram_counts(ref.tokens, n)
        ref_total += sum(ref_counts.values())
        matched += sum(min(cand_counts.get(gram, 0), count) for gram, count in ref_counts.items())
    recall = matched / ref_total if ref_total else 0.0
    precision = matched / (cand_total * len(references)) if cand_total else 0.0
    return ScoreTriple(precision=precision, recall=recall, f1=_harmonic(precision, recall))


def _lcs_table(a: tuple[str, ...], b: tuple[str, ...]) -> list[list[int]]:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        row = table[i]
        prev = table[i - 1]
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = prev[j] if prev[j] >= row[j - 1] else row[j - 1]
    return table


def _lcs_len(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    if not a or not b:
        return 0
    return _lcs_table(a, b)[len(a)][len(b)]


def _lcs_positions(a: tuple[str, ...], b: tuple[str, ...]) -> set[int]:
    """Indices into ``a`` participating in one canonical LCS with ``b``."""
    if not a or not b:
        return set()
    table = _lcs_table(a, b)
    positions: set[int] = set()
    i, j = len(a), len(b)
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1] and table[i][j] == table[i - 1][j - 1] + 1:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return positions


def rouge_l(
    candidate: TokenSequence,
    references: list[TokenSequence],
    variant: str = "f_measure",
) -> ScoreTriple:
    """Longest-common-subsequence overlap.

    Recall sums LCS lengths over references and divides by total reference
    length (the literal summed form selected by variant ``recall_eq8``);
    precision divides the same sum by candidate length times the number of
    references, and f1 is their harmonic mean. The full triple is returned
    either way; the variant names which component is the headline score.
    """
    if variant not in ("f_measure", "recall_eq8"):
        raise ValueError(f"unknown rouge_l variant: {variant!r}")
    if not references:
        raise ValueError("at least one reference is required")
    lcs_sum = sum(_lcs_len(candidate.tokens, ref.tokens) for ref in references)
    ref_total = sum(len(ref) for ref in references)
    recall = lcs_sum / ref_total if ref_total else 0.0
    denom = len(candidate) * len(references)
    precision = lcs_sum / denom if denom else 0.0
    return ScoreTriple(precision=precision, recall=recall, f1=_harmonic(precision, recall))


def _line_token_lists(seq: TokenSequence) -> list[tuple[str, ...]]:
    lines = [tokenize(line).tokens for line in seq.source_text.split("\n")]
    return [line for line in lines if line]


def rouge_lsum(candidate: TokenSequence, references: list[TokenSequence]) -> ScoreTriple:
    """Summary-level LCS: per reference line, the union of LCS hits across
    candidate lines, summed and divided by total reference/candidate tokens."""
    if not references:
        raise ValueError("at least one reference is required")
    cand_lines = _line_token_lists(candidate)
    matched = 0
    ref_total = 0
    for ref in references:
        for ref_line in _line_token_lists(ref):
            ref_total += len(ref_line)
            hit: set[int] = set()
            for cand_line in cand_lines:
                hit |= _lcs_positions(ref_line, cand_line)
            matched += len(hit)
    cand_total = sum(len(line) for line in cand_lines)
    recall = matched / ref_total if ref_total else 0.0
    denom = cand_total * len(references)
    precision = matched / denom if denom else 0.0
    return ScoreTriple(precision=precision, recall=recall, f1=_harmonic(precision, recall))


# ---------------------------------------------------------------------------
# METEOR


@dataclass(frozen=True)
class MeteorReport:
    precision: float
    recall: float
    matches: int
    chunks: int
    penalty: float
    fmean: float
    score: float


def _light_stem(token: str) -> str:
    """Tiny suffix stripper used by the optional stem matching stage."""
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 5 and token.endswith("sses"):
        return token[:-2]
    if (
        len(token) > 4
        and token.endswith("es")
        and (token[-3] in "sxz" or token[-4:-2] in ("ch", "sh"))
    ):
        return token[:-2]
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    if len(token) > 5 and token.endswith("ing"):
        return token[:-3]
    if len(token) > 4 and token.endswith("ed"):
        return token[:-2]
    return token


def _greedy_align(
    cand: tuple[str, ...], ref: tuple[str, ...], matcher: str
) -> list[tuple[int, int]]:
    """One-to-one alignment, candidate order, first free reference slot.

    The exact stage runs first; with matcher ``exact_plus_stem`` a second
    pass matches the leftovers on stems.
    """
    stages = [lambda t: t]
    if matcher == "exact_plus_stem":
        stages.append(_light_stem)
    cand_used = [False] * len(cand)
    ref_used = [False] * len(ref)
    pairs: list[tuple[int, int]] = []
    for key in stages:
        ref_keys = [key(t) for t in ref]
        for i, token in enumerate(cand):
            if cand_used[i]:
                continue
            needle = key(token)
            for j, ref_key in enumerate(ref_keys):
                if not ref_used[j] and ref_key == needle:
                    cand_used[i] = True
                    ref_used[j] = True
                    pairs.append((i, j))
                    break
    pairs.sort()
    return pairs


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for ci, ri in pairs:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor(candidate: TokenSequence, reference: TokenSequence, matcher: str = "exact") -> MeteorReport:
    """Unigram alignment score with a fragmentation penalty.

    fmean weights recall 9:1 over precision; the penalty is
    0.5 * (chunks / matches)^3, so even a perfect alignment of m tokens
    scores 1 - 0.5 / m^3 rather than 1.
    """
    if matcher not in ("exact", "exact_plus_stem"):
        raise ValueError(f"unknown matcher: {matcher!r}")
    if not candidate.tokens or not reference.tokens:
        return MeteorReport(0.0, 0.0, 0, 0, 0.0, 0.0, 0.0)
    pairs = _greedy_align(candidate.tokens, reference.tokens, matcher)
    m = len(pairs)
    if m == 0:
        return MeteorReport(0.0, 0.0, 0, 0, 0.0, 0.0, 0.0)
    chunks = _count_chunks(pairs)
    precision = m / len(candidate)
    recall = m / len(reference)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return MeteorReport(
        precision=precision,
        recall=recall,
        matches=m,
        chunks=chunks,
        penalty=penalty,
        fmean=fmean,
        score=fmean * (1.0 - penalty),
    )


# ---------------------------------------------------------------------------
# Embedding-similarity score


@dataclass(frozen=True)
class BertScoreReport:
    precision: float
    recall: float
    f1: float
    skipped_tokens: int = 0


class _TokenEmbedder:
    """Per-call cache of token embeddings (float64, unit norm or None)."""

    def __init__(self, config: EmbeddingProviderConfig):
        self.config = config
        self._cache: dict[str, np.ndarray | None] = {}
        self.skipped = 0

    def lookup(self, token: str) -> np.ndarray | None:
        if token not in self._cache:
            vec = embed_text(token, self.config)
            self._cache[token] = vec.values.astype(np.float64) if vec.normalized else None
        return self._cache[token]

    def embed_all(self, tokens: tuple[str, ...]) -> list[np.ndarray]:
        out = []
        for token in tokens:
            vec = self.lookup(token)
            if vec is None:
                self.skipped += 1
            else:
                out.append(vec)
        return out


def bertscore(
    candidate: TokenSequence,
    reference: TokenSequence,
    embedder: EmbeddingProviderConfig | None = None,
) -> BertScoreReport:
    """Greedy max-cosine token matching in both directions, then harmonic F1.

    Tokens whose embedding is all-zero are skipped and counted; if either
    side loses all its tokens the scores are zero.
    """
    if not candidate.tokens or not reference.tokens:
        raise ValueError("candidate and reference must both tokenize to at least one token")
    cache = _TokenEmbedder(embedder or EmbeddingProviderConfig())
    cand_vecs = cache.embed_all(candidate.tokens)
    ref_vecs = cache.embed_all(reference.tokens)
    if not cand_vecs or not ref_vecs:
        return BertScoreReport(0.0, 0.0, 0.0, skipped_tokens=cache.skipped)
    cand_mat = np.stack(cand_vecs)
    ref_mat = np.stack(ref_vecs)
    sims = np.clip(cand_mat @ ref_mat.T, -1.0, 1.0)
    precision = float(np.mean(np.max(sims, axis=1)))
    recall = float(np.mean(np.max(sims, axis=0)))
    return BertScoreReport(
        precision=precision,
        recall=recall,
        f1=_harmonic(precision, recall),
        skipped_tokens=cache.skipped,
    )


# ---------------------------------------------------------------------------
# Corpus-level report


@dataclass(frozen=True)
class EvalConfig:
    """Aggregation settings for a corpus report."""

    mode: str = "corpus"
    embedder: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    meteor_matcher: str = "exact"
    rouge_l_variant: str = "f_measure"
    bleu_smoothing_eps: float = 0.0

    def __post_init__(self):
        if self.mode not in ("corpus", "sentence"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.rouge_l_variant not in ("f_measure", "recall_eq8"):
            raise ValueError(f"unknown rouge_l variant: {self.rouge_l_variant!r}")
        if self.meteor_matcher not in ("exact", "exact_plus_stem"):
            raise ValueError(f"unknown meteor matcher: {self.meteor_matcher!r}")


@dataclass(frozen=True)
class CorpusReport:
    rows: dict[str, float]
    n_pairs: int
    mode: str


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def evaluate_corpus(pairs: list[tuple[str, str]], config: EvalConfig | None = None) -> CorpusReport:
    """Score candidate/reference text pairs and emit the full metric table.

    BLEU honors the mode (pooled counts vs per-pair average); all other rows
    are per-pair scores averaged arithmetically. A pair whose candidate or
    reference tokenizes to nothing contributes zeros outside of BLEU, which
    handles empties itself.
    """
    config = config or EvalConfig()
    if not pairs:
        raise ValueError("at least one candidate/reference pair is required")
    tokenized = [(tokenize(cand), tokenize(ref)) for cand, ref in pairs]

    if config.mode == "corpus":
        pooled = bleu_corpus(
            [(cand, [ref]) for cand, ref in tokenized], smoothing_eps=config.bleu_smoothing_eps
        )
        bleu_row = pooled.bleu
        precision_rows = list(pooled.precisions)
    else:
        reports = [
            bleu(cand, [ref], smoothing_eps=config.bleu_smoothing_eps)
            for cand, ref in tokenized
        ]
        bleu_row = _mean([r.bleu for r in reports])
        precision_rows = [_mean([r.precisions[i] for r in reports]) for i in range(4)]

    rouge1 = []
    rouge2 = []
    rougel = []
    rougelsum = []
    meteors = []
    bert_p = []
    bert_r = []
    bert_f1 = []
    for cand, ref in tokenized:
        degenerate = not cand.tokens or not ref.tokens
        if degenerate:
            rouge1.append(0.0)
            rouge2.append(0.0)
            rougel.append(0.0)
            rougelsum.append(0.0)
            meteors.append(0.0)
            bert_p.append(0.0)
            bert_r.append(0.0)
            bert_f1.append(0.0)
            continue
        rouge1.append(rouge_n(cand, [ref], 1).f1)
        rouge2.append(rouge_n(cand, [ref], 2).f1)
        triple = rouge_l(cand, [ref], variant=config.rouge_l_variant)
        rougel.append(triple.f1 if config.rouge_l_variant == "f_measure" else triple.recall)
        rougelsum.append(rouge_lsum(cand, [ref]).f1)
        meteors.append(meteor(cand, ref, matcher=config.meteor_matcher).score)
        bert = bertscore(cand, ref, config.embedder)
        bert_p.append(bert.precision)
        bert_r.append(bert.recall)
        bert_f1.append(bert.f1)

    rows = {
        "BLEU": bleu_row,
        "Unigram Precision": precision_rows[0],
        "Bigram Precision": precision_rows[1],
        "Trigram Precision": precision_rows[2],
        "4-gram Precision": precision_rows[3],
        "ROUGE-1": _mean(rouge1),
        "ROUGE-2": _mean(rouge2),
        "ROUGE-L": _mean(rougel),
        "ROUGE-LSum": _mean(rougelsum),
        "METEOR": _mean(meteors),
        "BERTScore-F1": _mean(bert_f1),
        "BERTScore-Precision": _mean(bert_p),
        "BERTScore-Recall": _mean(bert_r),
    }
    return CorpusReport(rows=rows, n_pairs=len(pairs), mode=config.mode)


def report_to_json(report: CorpusReport) -> str:
    """Canonical JSON rendering; CLI and HTTP both emit exactly this."""
    payload = {
        "mode": report.mode,
        "n_pairs": report.n_pairs,
        "metrics": {name: report.rows[name] for name in TABLE_ROWS},
    }
    return json.dumps(payload, indent=2) + "\n"


def report_to_csv(report: CorpusReport) -> str:
    """metric,value rows in table order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "value"])
    for name in TABLE_ROWS:
        writer.writerow([name, report.rows[name]])
    return buf.getvalue()
