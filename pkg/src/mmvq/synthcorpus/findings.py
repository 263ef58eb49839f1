"""Structured pathology state: the ground-truth unit behind every study.

A study carries either the single ``no_finding`` sentinel or one to two
distinct pathology findings, each with a side and a severity drawn from the
kind's valid ranges. Everything downstream (image, reports, VQA, labels) is
a deterministic function of this state plus a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("no_finding", "opacity", "effusion", "cardiomegaly", "edema", "pneumothorax")
PATHOLOGY_KINDS = tuple(k for k in KINDS if k != "no_finding")
SIDED_KINDS = ("opacity", "effusion", "pneumothorax")  # left/right/bilateral
SEVERITIES = ("mild", "moderate", "severe")
SIDES = ("left", "right", "bilateral")

# valid side values per kind; None encodes "no side axis"
VALID_SIDES = {
    "no_finding": (None,),
    "opacity": SIDES,
    "effusion": SIDES,
    "pneumothorax": SIDES,
    "edema": ("bilateral",),  # always diffuse and bilateral
    "cardiomegaly": (None,),
}

NO_FINDING_PRIOR = 0.35
LATERAL_PRIOR = 0.15


@dataclass(frozen=True)
class Finding:
    kind: str
    side: str | None = None
    severity: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown finding kind {self.kind!r}")
        if self.kind == "no_finding":
            if self.side is not None or self.severity is not None:
                raise ValueError("no_finding carries no side or severity")
            return
        if self.side not in VALID_SIDES[self.kind]:
            raise ValueError(f"invalid side {self.side!r} for kind {self.kind!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"invalid severity {self.severity!r} for {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "side": self.side, "severity": self.severity}

    @staticmethod
    def from_dict(d: dict) -> "Finding":
        return Finding(kind=d["kind"], side=d.get("side"), severity=d.get("severity"))


NO_FINDING = Finding("no_finding")


def validate_findings(findings: list[Finding]) -> None:
    """Study-level invariants: no duplicate kinds; no_finding stands alone."""
    kinds = [f.kind for f in findings]
    if len(set(kinds)) != len(kinds):
        raise ValueError(f"duplicate finding kinds in {kinds}")
    if "no_finding" in kinds and len(kinds) != 1:
        raise ValueError("no_finding must be the study's only finding")
    if not findings:
        raise ValueError("findings list is empty")


def sample_findings(rng: np.random.Generator) -> list[Finding]:
    """Draw a study's findings from the documented prior.

    35% of studies are no_finding; the rest carry 1-2 distinct pathology
    kinds with side/severity uniform over each kind's valid values.
    """
    if rng.random() < NO_FINDING_PRIOR:
        return [NO_FINDING]
    n = 1 + int(rng.random() < 0.5)
    kinds = rng.choice(len(PATHOLOGY_KINDS), size=n, replace=False)
    out = []
    for ki in sorted(int(k) for k in kinds):
        kind = PATHOLOGY_KINDS[ki]
        sides = VALID_SIDES[kind]
        side = sides[int(rng.integers(len(sides)))]
        severity = SEVERITIES[int(rng.integers(len(SEVERITIES)))]
        out.append(Finding(kind, side, severity))
    validate_findings(out)
    return out


@dataclass
class StudyRecord:
    study_id: str
    findings: list[Finding]
    image: np.ndarray | None = None  # H x W float32 in [0, 1]
    report_verbose: str = ""
    report_concise: str = ""
    vqa: list = field(default_factory=list)  # list of VqaItem
    view: str = "frontal"  # frontal | lateral
    split: str = "train"  # train | test

    def present_kinds(self) -> set[str]:
        return {f.kind for f in self.findings}
