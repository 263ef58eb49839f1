"""BLEU and ROUGE-L over grammar-tokenized text.

Conventions (the tables these mirror don't state theirs): BLEU-n is the
cumulative score, geometric mean of modified precisions 1..n with a brevity
penalty and no smoothing, so any zero n-gram precision zeroes BLEU-n and
above. Multi-reference counts are clipped by the per-reference maximum and
the brevity length is the closest reference length (ties toward shorter).
ROUGE-L is the LCS F-measure with beta = 1.2.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

ROUGE_BETA = 1.2


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], references: Sequence[Sequence[str]], max_n: int = 4) -> dict[int, float]:
    """Cumulative BLEU-1..max_n for one candidate against its references."""
    if not references:
        raise ValueError("need at least one reference")
    c = len(candidate)
    if c == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    ref_lens = sorted(len(r) for r in references)
    r = min(ref_lens, key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c) if c > 0 else 0.0

    log_precisions: list[float | None] = []
    for n in range(1, max_n + 1):
        cand_grams = _ngrams(candidate, n)
        total = sum(cand_grams.values())
        if total == 0:
            log_precisions.append(None)
            continue
        max_ref = Counter()
        for ref in references:
            for gram, cnt in _ngrams(ref, n).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        clipped = sum(min(cnt, max_ref[gram]) for gram, cnt in cand_grams.items())
        log_precisions.append(math.log(clipped / total) if clipped else None)

    out = {}
    for n in range(1, max_n + 1):
        logs = log_precisions[:n]
        if any(lp is None for lp in logs):
            out[n] = 0.0
        else:
            out[n] = bp * math.exp(sum(logs) / n)
    return out


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str], beta: float = ROUGE_BETA) -> float:
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_len(candidate, reference)
    if lcs == 0:
        return 0.0
    prec = lcs / len(candidate)
    rec = lcs / len(reference)
    b2 = beta * beta
    return (1 + b2) * rec * prec / (rec + b2 * prec)
