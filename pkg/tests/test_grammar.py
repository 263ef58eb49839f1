import re

import pytest

from mmvq.synthcorpus.findings import Finding, KINDS, NO_FINDING, PATHOLOGY_KINDS, SEVERITIES, VALID_SIDES
from mmvq.synthcorpus.grammar import (
    CONCISE,
    VERBOSE_DESC,
    concise_sentence,
    render_report,
    verbose_sentence,
)

WORD = re.compile(r"[a-z']+")


def words(text):
    return set(WORD.findall(text.lower()))


def test_no_finding_variant_zero():
    assert concise_sentence(NO_FINDING, 0) == "No acute cardiopulmonary abnormality."


def test_canonical_keywords_always_present():
    for kind in PATHOLOGY_KINDS:
        for side in VALID_SIDES[kind]:
            for sev in SEVERITIES:
                f = Finding(kind, side, sev)
                for variant in range(3):
                    for sentence in (concise_sentence(f, variant), verbose_sentence(f, variant)):
                        w = words(sentence)
                        assert kind in w, sentence
                        assert sev in w, sentence
                        if side is not None:
                            assert side in w, sentence


def test_no_cross_kind_contamination():
    for kind in PATHOLOGY_KINDS:
        f = Finding(kind, VALID_SIDES[kind][0], "mild")
        for variant in range(3):
            for sentence in (concise_sentence(f, variant), verbose_sentence(f, variant)):
                w = words(sentence)
                others = (set(PATHOLOGY_KINDS) - {kind}) & w
                assert not others, f"{sentence} mentions {others}"


def test_report_contains_all_keywords():
    report = render_report([Finding("effusion", "right", "moderate")], "concise", seed=1)
    w = words(report)
    assert {"effusion", "right", "moderate"} <= w


def test_report_deterministic():
    f = [Finding("opacity", "left", "severe"), Finding("edema", "bilateral", "mild")]
    assert render_report(f, "verbose", 5) == render_report(f, "verbose", 5)
    assert render_report(f, "concise", 5) == render_report(f, "concise", 5)


def test_styles_differ():
    f = [Finding("opacity", "left", "severe")]
    verbose = render_report(f, "verbose", 2)
    concise = render_report(f, "concise", 2)
    assert "FINDINGS:" in verbose and "IMPRESSION:" in verbose
    assert "FINDINGS:" not in concise
    with pytest.raises(ValueError):
        render_report(f, "fancy", 2)


def test_variant_tables_have_three_surface_forms():
    for kind in KINDS:
        assert len(CONCISE[kind]) >= 3
        assert len(VERBOSE_DESC[kind]) >= 3
        assert len(set(CONCISE[kind])) == len(CONCISE[kind])
