"""Rule-based VQA generation over the structured findings.

Each study gets 4-5 question/answer pairs from three families (presence,
location, severity). Every study carries exactly one location and one
severity question plus 2-3 presence questions, so each family keeps at
least a 20% share of all questions. ``answer_facts`` stores the structured
truth the rubric scorer grades against.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..numcore import np_rng
from .findings import Finding, PATHOLOGY_KINDS, SIDED_KINDS, validate_findings

KIND_NP = {
    "opacity": "an opacity",
    "effusion": "a pleural effusion",
    "cardiomegaly": "cardiomegaly",
    "edema": "pulmonary edema",
    "pneumothorax": "a pneumothorax",
}

PRESENCE_Q = ["Is there {np}?", "Do you see {np}?", "Is {np} present?"]
LOCATION_Q = ["Where is the {kind}?", "What is the location of the {kind}?"]
SEVERITY_Q = ["How severe is the {kind}?", "What is the severity of the {kind}?"]

LOCATABLE_KINDS = SIDED_KINDS + ("edema",)  # edema answers "bilateral"


@dataclass(frozen=True)
class AnswerFacts:
    family: str  # presence | location | severity
    kind: str
    present: bool
    side: str | None = None
    severity: str | None = None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "kind": self.kind,
            "present": self.present,
            "side": self.side,
            "severity": self.severity,
        }

    @staticmethod
    def from_dict(d: dict) -> "AnswerFacts":
        return AnswerFacts(
            family=d["family"],
            kind=d["kind"],
            present=bool(d["present"]),
            side=d.get("side"),
            severity=d.get("severity"),
        )


@dataclass(frozen=True)
class VqaItem:
    question: str
    answer: str
    facts: AnswerFacts

    def to_dict(self) -> dict:
        return {"question": self.question, "answer": self.answer, "facts": self.facts.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "VqaItem":
        return VqaItem(d["question"], d["answer"], AnswerFacts.from_dict(d["facts"]))


def _positive_answer(f: Finding, rng) -> str:
    sev = f.severity
    loc = f"{f.side} " if f.side else ""
    forms = [
        f"Yes, there is {sev} {loc}{f.kind}.",
        f"Yes, {sev} {loc}{f.kind} is present.",
    ]
    return forms[int(rng.integers(len(forms)))]


def _negative_answer(kind: str, rng) -> str:
    forms = [f"No, there is no {kind}.", f"No {kind} is seen."]
    return forms[int(rng.integers(len(forms)))]


def _presence_item(kind: str, finding: Finding | None, rng) -> VqaItem:
    q = PRESENCE_Q[int(rng.integers(len(PRESENCE_Q)))].format(np=KIND_NP[kind])
    if finding is not None:
        return VqaItem(q, _positive_answer(finding, rng),
                       AnswerFacts("presence", kind, True, finding.side, finding.severity))
    return VqaItem(q, _negative_answer(kind, rng), AnswerFacts("presence", kind, False))


def _location_item(kind: str, finding: Finding | None, rng) -> VqaItem:
    q = LOCATION_Q[int(rng.integers(len(LOCATION_Q)))].format(kind=kind)
    if finding is None:
        return VqaItem(q, f"There is no {kind}.", AnswerFacts("location", kind, False))
    if finding.side == "bilateral":
        ans = f"The {kind} is bilateral."
    else:
        ans = f"The {kind} is on the {finding.side} side."
    return VqaItem(q, ans, AnswerFacts("location", kind, True, side=finding.side))


def _severity_item(kind: str, finding: Finding | None, rng) -> VqaItem:
    q = SEVERITY_Q[int(rng.integers(len(SEVERITY_Q)))].format(kind=kind)
    if finding is None:
        return VqaItem(q, f"There is no {kind}.", AnswerFacts("severity", kind, False))
    return VqaItem(q, f"The {kind} is {finding.severity}.",
                   AnswerFacts("severity", kind, True, severity=finding.severity))


def gen_vqa(findings: list[Finding], seed: int) -> list[VqaItem]:
    """4-5 QA pairs, balanced so no family has a dominant image-blind answer.

    Every present finding gets a (positive) presence question plus one
    absent-kind (negative) presence question; one location and one severity
    question target a present finding when one exists, an absent kind
    otherwise; studies with spare room get one extra question about an
    absent kind from a rotating family, so negative location/severity
    answers also appear for studies with findings.
    """
    validate_findings(findings)
    rng = np_rng(seed, "vqa")
    by_kind = {f.kind: f for f in findings if f.kind != "no_finding"}
    present = list(by_kind)
    absent = [k for k in PATHOLOGY_KINDS if k not in by_kind]

    items: list[VqaItem] = []

    # presence: every present finding, then one absent kind
    for k in present:
        items.append(_presence_item(k, by_kind[k], rng))
    neg_kind = absent[int(rng.integers(len(absent)))]
    items.append(_presence_item(neg_kind, None, rng))
    if not present:  # keep at least two presence questions on clean studies
        rest = [k for k in absent if k != neg_kind]
        items.append(_presence_item(rest[int(rng.integers(len(rest)))], None, rng))

    # one location question, preferring a present locatable finding
    loc_present = [k for k in present if k in LOCATABLE_KINDS]
    if loc_present:
        k = loc_present[int(rng.integers(len(loc_present)))]
        items.append(_location_item(k, by_kind[k], rng))
    else:
        pool = [k for k in LOCATABLE_KINDS if k not in by_kind]
        items.append(_location_item(pool[int(rng.integers(len(pool)))], None, rng))

    # one severity question, preferring a present finding
    if present:
        k = present[int(rng.integers(len(present)))]
        items.append(_severity_item(k, by_kind[k], rng))
    else:
        items.append(_severity_item(absent[int(rng.integers(len(absent)))], None, rng))

    # fill to five with an absent-kind question from a rotating family,
    # so negative location/severity answers occur alongside findings
    if len(items) < 5 and rng.random() < 0.5:
        family = ("location", "severity", "presence")[int(rng.integers(3))]
        if family == "location":
            pool = [k for k in LOCATABLE_KINDS if k not in by_kind]
            items.append(_location_item(pool[int(rng.integers(len(pool)))], None, rng))
        elif family == "severity":
            items.append(_severity_item(absent[int(rng.integers(len(absent)))], None, rng))
        else:
            items.append(_presence_item(absent[int(rng.integers(len(absent)))], None, rng))

    return items[:5]


def facts_entailed(facts: AnswerFacts, findings: list[Finding]) -> bool:
    """Structural check: the stored truth follows from the findings list."""
    by_kind = {f.kind: f for f in findings}
    f = by_kind.get(facts.kind)
    if facts.present != (f is not None):
        return False
    if f is None:
        return facts.side is None and facts.severity is None
    if facts.side is not None and facts.side != f.side:
        return False
    if facts.severity is not None and facts.severity != f.severity:
        return False
    return True


def all_vqa_texts() -> list[str]:
    """Every question/answer surface form (for vocab building)."""
    from .findings import SEVERITIES, VALID_SIDES

    texts: list[str] = []
    for kind in PATHOLOGY_KINDS:
        for q in PRESENCE_Q:
            texts.append(q.format(np=KIND_NP[kind]))
        for q in LOCATION_Q + SEVERITY_Q:
            texts.append(q.format(kind=kind))
        texts.append(f"No, there is no {kind}.")
        texts.append(f"No {kind} is seen.")
        texts.append(f"There is no {kind}.")
        for side in VALID_SIDES[kind]:
            for sev in SEVERITIES:
                f = Finding(kind, side, sev)
                loc = f"{side} " if side else ""
                texts.append(f"Yes, there is {sev} {loc}{kind}.")
                texts.append(f"Yes, {sev} {loc}{kind} is present.")
                if side == "bilateral":
                    texts.append(f"The {kind} is bilateral.")
                elif side is not None:
                    texts.append(f"The {kind} is on the {side} side.")
                texts.append(f"The {kind} is {sev}.")
    return texts
