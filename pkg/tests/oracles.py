"""Independent naive re-implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (pure Python
loops, math.fsum for 64-bit accumulation, recursion with memo instead of DP
tables) so that agreement with the package is evidence, not tautology. The
only shared code is the embedding provider itself, which BERTScore-style
scoring has to consult by definition.
"""

from __future__ import annotations

import math
import unicodedata

from courseqa.embedding import EmbeddingProviderConfig, embed_text


def o_tokenize(text):
    out = []
    for word in text.lower().split():
        chars = list(word)
        while chars and unicodedata.category(chars[0]).startswith("P"):
            chars.pop(0)
        while chars and unicodedata.category(chars[-1]).startswith("P"):
            chars.pop()
        if chars:
            out.append("".join(chars))
    return out


def o_ngrams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def o_clipped(cand_grams, ref_gram_lists):
    matched = 0
    for gram in set(cand_grams):
        best = max((refs.count(gram) for refs in ref_gram_lists), default=0)
        matched += min(cand_grams.count(gram), best)
    return matched


def o_closest_ref_len(cand_len, ref_lens):
    ranked = sorted(ref_lens, key=lambda r: (abs(r - cand_len), r))
    return ranked[0]


def o_brevity_penalty(c, r):
    if c == 0:
        return 0.0
    if c >= r:
        return 1.0
    return math.exp(1.0 - r / c)


def o_bleu_corpus(pairs, max_n=4):
    """pairs: list of (candidate_tokens, [reference_tokens, ...])."""
    matched = [0] * max_n
    total = [0] * max_n
    c_sum = 0
    r_sum = 0
    for cand, refs in pairs:
        c_sum += len(cand)
        r_sum += o_closest_ref_len(len(cand), [len(r) for r in refs])
        for n in range(1, max_n + 1):
            cand_grams = o_ngrams(cand, n)
            matched[n - 1] += o_clipped(cand_grams, [o_ngrams(r, n) for r in refs])
            total[n - 1] += len(cand_grams)
    precisions = [m / t if t else 0.0 for m, t in zip(matched, total)]
    bp = o_brevity_penalty(c_sum, r_sum)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(math.fsum(math.log(p) for p in precisions) / max_n)
    return {"precisions": precisions, "bp": bp, "bleu": score, "c": c_sum, "r": r_sum}


def o_bleu_sentence(cand, refs, max_n=4):
    return o_bleu_corpus([(cand, refs)], max_n)


def o_rouge_n(cand, refs, n):
    cand_grams = o_ngrams(cand, n)
    matched = 0
    ref_total = 0
    for ref in refs:
        ref_grams = o_ngrams(ref, n)
        ref_total += len(ref_grams)
        for gram in set(ref_grams):
            matched += min(cand_grams.count(gram), ref_grams.count(gram))
    recall = matched / ref_total if ref_total else 0.0
    denom = len(cand_grams) * len(refs)
    precision = matched / denom if denom else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def o_lcs_len(a, b):
    memo = {}

    def go(i, j):
        if i == 0 or j == 0:
            return 0
        if (i, j) not in memo:
            if a[i - 1] == b[j - 1]:
                memo[(i, j)] = go(i - 1, j - 1) + 1
            else:
                memo[(i, j)] = max(go(i - 1, j), go(i, j - 1))
        return memo[(i, j)]

    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, (len(a) + 1) * (len(b) + 1) + 100))
    try:
        return go(len(a), len(b))
    finally:
        sys.setrecursionlimit(old)


def o_lcs_positions(a, b):
    """Ref-side indices of the canonical LCS of a against b.

    Canonical rule: take the match whenever the last tokens agree, otherwise
    step in the first sequence when its subproblem is at least as long.
    """
    memo = {}

    def length(i, j):
        if i == 0 or j == 0:
            return 0
        if (i, j) not in memo:
            if a[i - 1] == b[j - 1]:
                memo[(i, j)] = length(i - 1, j - 1) + 1
            else:
                memo[(i, j)] = max(length(i - 1, j), length(i, j - 1))
        return memo[(i, j)]

    positions = set()
    i, j = len(a), len(b)
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif length(i - 1, j) >= length(i, j - 1):
            i -= 1
        else:
            j -= 1
    return positions


def o_rouge_l(cand, refs):
    lcs_sum = sum(o_lcs_len(cand, ref) for ref in refs)
    ref_total = sum(len(ref) for ref in refs)
    recall = lcs_sum / ref_total if ref_total else 0.0
    denom = len(cand) * len(refs)
    precision = lcs_sum / denom if denom else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def o_rouge_lsum(cand_text, ref_texts):
    cand_lines = [o_tokenize(line) for line in cand_text.split("\n")]
    cand_lines = [line for line in cand_lines if line]
    matched = 0
    ref_total = 0
    for ref_text in ref_texts:
        for ref_line in (o_tokenize(line) for line in ref_text.split("\n")):
            if not ref_line:
                continue
            ref_total += len(ref_line)
            hit = set()
            for cand_line in cand_lines:
                hit |= o_lcs_positions(ref_line, cand_line)
            matched += len(hit)
    cand_total = sum(len(line) for line in cand_lines)
    recall = matched / ref_total if ref_total else 0.0
    denom = cand_total * len(ref_texts)
    precision = matched / denom if denom else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def o_meteor(cand, ref):
    if not cand or not ref:
        return {"score": 0.0, "matches": 0, "chunks": 0}
    taken = [False] * len(ref)
    pairs = []
    for i, token in enumerate(cand):
        for j, ref_token in enumerate(ref):
            if not taken[j] and ref_token == token:
                taken[j] = True
                pairs.append((i, j))
                break
    m = len(pairs)
    if m == 0:
        return {"score": 0.0, "matches": 0, "chunks": 0}
    chunks = 1
    for (ci, ri), (cj, rj) in zip(pairs, pairs[1:]):
        if cj != ci + 1 or rj != ri + 1:
            chunks += 1
    precision = m / len(cand)
    recall = m / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return {"score": fmean * (1 - penalty), "matches": m, "chunks": chunks}


def o_unit_embedding(token, cfg):
    vec = embed_text(token, cfg)
    if not vec.normalized:
        return None
    return [float(x) for x in vec.values]


def o_cosine(u, v):
    return math.fsum(a * b for a, b in zip(u, v))


def o_bertscore(cand, ref, cfg):
    cand_vecs = [v for v in (o_unit_embedding(t, cfg) for t in cand) if v is not None]
    ref_vecs = [v for v in (o_unit_embedding(t, cfg) for t in ref) if v is not None]
    if not cand_vecs or not ref_vecs:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    precision = math.fsum(
        max(o_cosine(c, r) for r in ref_vecs) for c in cand_vecs
    ) / len(cand_vecs)
    recall = math.fsum(
        max(o_cosine(r, c) for c in cand_vecs) for r in ref_vecs
    ) / len(ref_vecs)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def o_mean(values):
    return math.fsum(values) / len(values)


def o_corpus_report(pairs, cfg=None, mode="corpus"):
    """Recompute all 13 report rows for (candidate_text, reference_text) pairs."""
    cfg = cfg or EmbeddingProviderConfig()
    tokenized = [(o_tokenize(c), o_tokenize(r)) for c, r in pairs]

    if mode == "corpus":
        pooled = o_bleu_corpus([(c, [r]) for c, r in tokenized])
        bleu_row = pooled["bleu"]
        prec_rows = pooled["precisions"]
    else:
        reports = [o_bleu_sentence(c, [r]) for c, r in tokenized]
        bleu_row = o_mean([rep["bleu"] for rep in reports])
        prec_rows = [o_mean([rep["precisions"][i] for rep in reports]) for i in range(4)]

    rouge1, rouge2, rougel, rougelsum, meteors = [], [], [], [], []
    bert_p, bert_r, bert_f = [], [], []
    for (cand, ref), (cand_text, ref_text) in zip(tokenized, pairs):
        if not cand or not ref:
            for bucket in (rouge1, rouge2, rougel, rougelsum, meteors, bert_p, bert_r, bert_f):
                bucket.append(0.0)
            continue
        rouge1.append(o_rouge_n(cand, [ref], 1)["f1"])
        rouge2.append(o_rouge_n(cand, [ref], 2)["f1"])
        rougel.append(o_rouge_l(cand, [ref])["f1"])
        rougelsum.append(o_rouge_lsum(cand_text, [ref_text])["f1"])
        meteors.append(o_meteor(cand, ref)["score"])
        bs = o_bertscore(cand, ref, cfg)
        bert_p.append(bs["precision"])
        bert_r.append(bs["recall"])
        bert_f.append(bs["f1"])

    return {
        "BLEU": bleu_row,
        "Unigram Precision": prec_rows[0],
        "Bigram Precision": prec_rows[1],
        "Trigram Precision": prec_rows[2],
        "4-gram Precision": prec_rows[3],
        "ROUGE-1": o_mean(rouge1),
        "ROUGE-2": o_mean(rouge2),
        "ROUGE-L": o_mean(rougel),
        "ROUGE-LSum": o_mean(rougelsum),
        "METEOR": o_mean(meteors),
        "BERTScore-F1": o_mean(bert_f),
        "BERTScore-Precision": o_mean(bert_p),
        "BERTScore-Recall": o_mean(bert_r),
    }


def o_search(entries, query64, metric="cosine", k=5):
    """Brute-force top-k over (chunk_id, float64 values) pairs."""

    def norm(v):
        return math.sqrt(math.fsum(x * x for x in v))

    qn = norm(query64)
    scored = []
    for chunk_id, values in entries:
        dot = math.fsum(a * b for a, b in zip(values, query64))
        if metric == "dot":
            score = dot
        else:
            vn = norm(values)
            score = 0.0 if vn == 0.0 or qn == 0.0 else dot / (vn * qn)
            score = min(1.0, max(-1.0, score))
        scored.append((chunk_id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [
        {"chunk_id": cid, "score": score, "rank": rank}
        for rank, (cid, score) in enumerate(scored[:k], start=1)
    ]
