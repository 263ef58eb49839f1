"""Rule-based report labeler: keyword + negation extraction per sentence.

Total over arbitrary text. Within a sentence, a finding-kind keyword marks a
mention; "no"/"not"/"without" flips it negative, "possible"/"possibly"/"may"
makes it uncertain, otherwise it is positive. Side and severity words are
captured from positive mentions. A sentence with no kind keyword that says
the study is clean (contains "clear"/"unremarkable", or a negation cue next
to "abnormality"/"findings") is evidence for no_finding; no_finding is only
reported positive when no pathology kind is positive or uncertain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..synthcorpus.findings import Finding, KINDS, PATHOLOGY_KINDS, SEVERITIES

STATES = ("no_mention", "positive", "negative", "uncertain")

NEGATION_CUES = {"no", "not", "without"}
UNCERTAIN_CUES = {"possible", "possibly", "may"}
CLEAN_WORDS = {"clear", "unremarkable"}
CLEAN_OBJECTS = {"abnormality", "abnormalities", "findings"}
SIDE_WORDS = ("left", "right", "bilateral")

_WORD_RE = re.compile(r"[a-z']+")
_SENT_RE = re.compile(r"[.?!]")

_STATE_RANK = {"no_mention": 0, "negative": 1, "uncertain": 2, "positive": 3}


@dataclass
class LabelEntry:
    state: str = "no_mention"
    side: str | None = None
    severity: str | None = None

    def as_tuple(self):
        return (self.state, self.side, self.severity)


@dataclass
class LabelVector:
    entries: dict[str, LabelEntry] = field(default_factory=dict)

    def __post_init__(self):
        for kind in KINDS:
            self.entries.setdefault(kind, LabelEntry())

    def __getitem__(self, kind: str) -> LabelEntry:
        return self.entries[kind]

    def state(self, kind: str) -> str:
        return self.entries[kind].state

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelVector):
            return NotImplemented
        return all(self.entries[k].as_tuple() == other.entries[k].as_tuple() for k in KINDS)

    def to_dict(self) -> dict:
        return {
            k: {"state": e.state, "side": e.side, "severity": e.severity}
            for k, e in self.entries.items()
        }

    @staticmethod
    def from_findings(findings: list[Finding]) -> "LabelVector":
        vec = LabelVector()
        for f in findings:
            vec.entries[f.kind] = LabelEntry("positive", f.side, f.severity)
        return vec


def _sentence_side(words: set[str]) -> str | None:
    if "bilateral" in words or ("left" in words and "right" in words):
        return "bilateral"
    for side in ("left", "right"):
        if side in words:
            return side
    return None


def _sentence_severity(words: set[str]) -> str | None:
    for sev in SEVERITIES:
        if sev in words:
            return sev
    return None


def extract_labels(text: str) -> LabelVector:
    vec = LabelVector()
    clean_evidence = False
    for sentence in _SENT_RE.split(text.lower()):
        words = set(_WORD_RE.findall(sentence))
        if not words:
            continue
        mentioned = [k for k in PATHOLOGY_KINDS if k in words]
        if not mentioned:
            negated_clean = bool(NEGATION_CUES & words) and bool(CLEAN_OBJECTS & words)
            if CLEAN_WORDS & words or negated_clean:
                clean_evidence = True
            continue
        if NEGATION_CUES & words:
            state = "negative"
        elif UNCERTAIN_CUES & words:
            state = "uncertain"
        else:
            state = "positive"
        for kind in mentioned:
            entry = vec.entries[kind]
            if _STATE_RANK[state] > _STATE_RANK[entry.state]:
                entry.state = state
            if state == "positive":
                if entry.side is None:
                    entry.side = _sentence_side(words)
                if entry.severity is None:
                    entry.severity = _sentence_severity(words)
    pathology_active = any(
        vec.entries[k].state in ("positive", "uncertain") for k in PATHOLOGY_KINDS
    )
    if clean_evidence and not pathology_active:
        vec.entries["no_finding"] = LabelEntry("positive")
    return vec
