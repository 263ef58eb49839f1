"""Rubric grading of VQA answers: 0 / 0.5 / 1 per answer.

1 when the presence bit and every required secondary fact (side for
location questions, severity for severity questions) are stated correctly
and nothing stated contradicts the truth; 0.5 when presence is right but a
required secondary fact is missing; 0 otherwise, including any stated
side/severity that contradicts the known truth.
"""

from __future__ import annotations

import re

from ..synthcorpus.findings import PATHOLOGY_KINDS, SEVERITIES
from ..synthcorpus.vqa import AnswerFacts
from .labeler import NEGATION_CUES

_WORD_RE = re.compile(r"[a-z']+")


def _answer_words(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.lower()))


def _stated_side(words: set[str]) -> str | None:
    if "bilateral" in words or ("left" in words and "right" in words):
        return "bilateral"
    for side in ("left", "right"):
        if side in words:
            return side
    return None


def _stated_severity(words: set[str]) -> str | None:
    for sev in SEVERITIES:
        if sev in words:
            return sev
    return None


def vqa_score(predicted_answer: str, facts: AnswerFacts) -> float:
    words = _answer_words(predicted_answer)
    mentioned = {k for k in PATHOLOGY_KINDS if k in words}
    if mentioned and facts.kind not in mentioned:
        return 0.0  # talks about a different finding: irrelevant
    negated = bool(NEGATION_CUES & words)
    mentions_kind = facts.kind in words
    if negated:
        asserted_present = False
    elif "yes" in words or mentions_kind:
        asserted_present = True
    else:
        return 0.0  # irrelevant or uninterpretable

    if asserted_present != facts.present:
        return 0.0
    if not facts.present:
        return 1.0

    side = _stated_side(words)
    sev = _stated_severity(words)
    if facts.side is not None and side is not None and side != facts.side:
        return 0.0
    if facts.severity is not None and sev is not None and sev != facts.severity:
        return 0.0
    if facts.family == "location":
        return 1.0 if side == facts.side else 0.5
    if facts.family == "severity":
        return 1.0 if sev == facts.severity else 0.5
    return 1.0  # presence question: presence bit was the only required fact


def vqa_accuracy(graded: list[tuple[float, str]]) -> dict[str, float | None]:
    """Mean score overall and per question family from (score, family) pairs."""
    out: dict[str, float | None] = {}
    scores = [s for s, _ in graded]
    out["all"] = sum(scores) / len(scores) if scores else None
    for family in ("presence", "location", "severity"):
        fam = [s for s, f in graded if f == family]
        out[family] = sum(fam) / len(fam) if fam else None
    return out
