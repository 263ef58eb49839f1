"""Report grammar: fixed surface templates with canonical keywords.

Every rendered sentence for a finding contains the canonical kind word, the
side word (for sided kinds) and the severity word, so the rule-based labeler
can invert the grammar exactly. Verbose style is a FINDINGS section (one
descriptive sentence per finding) followed by an IMPRESSION section; concise
style is the impression sentences alone.
"""

from __future__ import annotations

from ..numcore import derive_seed
from .findings import Finding, validate_findings

GRAMMAR_VERSION = "pxr-grammar-1"

CONCISE = {
    "no_finding": [
        "No acute cardiopulmonary abnormality.",
        "No acute findings.",
        "The lungs are clear without acute abnormality.",
    ],
    "opacity": [
        "{Sev} {side} opacity is present.",
        "There is {sev} {side} opacity.",
        "The image shows {sev} {side} opacity.",
    ],
    "effusion": [
        "{Sev} {side} pleural effusion is present.",
        "There is a {sev} {side} pleural effusion.",
        "The image shows a {sev} {side} effusion.",
    ],
    "cardiomegaly": [
        "{Sev} cardiomegaly is present.",
        "There is {sev} cardiomegaly.",
        "The image shows {sev} cardiomegaly.",
    ],
    "edema": [
        "{Sev} {side} pulmonary edema is present.",
        "There is {sev} {side} edema.",
        "The image shows {sev} {side} pulmonary edema.",
    ],
    "pneumothorax": [
        "{Sev} {side} pneumothorax is present.",
        "There is a {sev} {side} pneumothorax.",
        "The image shows a {sev} {side} pneumothorax.",
    ],
}

VERBOSE_DESC = {
    "no_finding": [
        "The lungs are clear and well expanded.",
        "Heart and lungs are unremarkable.",
        "The cardiac silhouette is normal and the lungs are clear.",
    ],
    "opacity": [
        "A focal area of {sev} {side} opacity is seen.",
        "Patchy {sev} {side} opacity is noted.",
        "There is a rounded {sev} {side} opacity.",
    ],
    "effusion": [
        "A {sev} {side} pleural effusion layers at the base.",
        "Blunting of the costophrenic angle reflects a {sev} {side} effusion.",
        "There is a {sev} {side} pleural effusion at the lung base.",
    ],
    "cardiomegaly": [
        "The cardiac silhouette is enlarged, consistent with {sev} cardiomegaly.",
        "The heart is enlarged, indicating {sev} cardiomegaly.",
        "{Sev} cardiomegaly is seen with an enlarged cardiac contour.",
    ],
    "edema": [
        "Diffuse {sev} {side} interstitial edema is seen.",
        "There is a diffuse haze of {sev} {side} edema.",
        "{Sev} {side} pulmonary edema is noted throughout.",
    ],
    "pneumothorax": [
        "A {sev} {side} apical pneumothorax is seen.",
        "There is a {sev} {side} pneumothorax at the apex.",
        "A thin lucent line reflects a {sev} {side} pneumothorax.",
    ],
}

FINDINGS_HEADER = "FINDINGS:"
IMPRESSION_HEADER = "IMPRESSION:"


def _fill(template: str, finding: Finding) -> str:
    sev = finding.severity or ""
    side = finding.side or ""
    out = template.replace("{sev}", sev).replace("{Sev}", sev.capitalize())
    out = out.replace("{side}", side).replace("{Side}", side.capitalize())
    return out


def concise_sentence(finding: Finding, variant: int) -> str:
    return _fill(CONCISE[finding.kind][variant % len(CONCISE[finding.kind])], finding)


def verbose_sentence(finding: Finding, variant: int) -> str:
    return _fill(VERBOSE_DESC[finding.kind][variant % len(VERBOSE_DESC[finding.kind])], finding)


def render_report(findings: list[Finding], style: str, seed: int) -> str:
    """Deterministic report for (findings, style, seed)."""
    validate_findings(findings)
    if style not in ("verbose", "concise"):
        raise ValueError(f"unknown report style {style!r}")
    impressions = [
        concise_sentence(f, derive_seed(seed, "concise", i, f.kind) % 3)
        for i, f in enumerate(findings)
    ]
    if style == "concise":
        return " ".join(impressions)
    descs = [
        verbose_sentence(f, derive_seed(seed, "verbose", i, f.kind) % 3)
        for i, f in enumerate(findings)
    ]
    return f"{FINDINGS_HEADER} " + " ".join(descs) + f" {IMPRESSION_HEADER} " + " ".join(impressions)


def all_report_texts() -> list[str]:
    """Every surface form the report grammar can emit (for vocab building)."""
    from .findings import KINDS, SEVERITIES, VALID_SIDES

    texts = [FINDINGS_HEADER, IMPRESSION_HEADER]
    for kind in KINDS:
        for table in (CONCISE, VERBOSE_DESC):
            for tpl in table[kind]:
                if kind == "no_finding":
                    texts.append(tpl)
                    continue
                for side in VALID_SIDES[kind]:
                    for sev in SEVERITIES:
                        texts.append(_fill(tpl, Finding(kind, side, sev)))
    return texts


def report_seed(base_seed: int, study_id: str) -> int:
    return derive_seed(base_seed, "report", study_id)
