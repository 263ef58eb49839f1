from hypothesis import given, settings, strategies as st

from mmvq.evalsuite.labeler import LabelVector, extract_labels
from mmvq.synthcorpus.findings import Finding, NO_FINDING, PATHOLOGY_KINDS, SEVERITIES, VALID_SIDES
from mmvq.synthcorpus.grammar import render_report


def test_single_finding_example():
    text = render_report([Finding("effusion", "right", "moderate")], "concise", seed=0)
    vec = extract_labels(text)
    assert vec["effusion"].state == "positive"
    assert vec["effusion"].side == "right"
    assert vec["effusion"].severity == "moderate"
    for kind in PATHOLOGY_KINDS:
        if kind != "effusion":
            assert vec[kind].state == "no_mention"
    assert vec["no_finding"].state == "no_mention"


def test_no_finding_sentence():
    vec = extract_labels("No acute cardiopulmonary abnormality.")
    assert vec["no_finding"].state == "positive"
    assert all(vec[k].state == "no_mention" for k in PATHOLOGY_KINDS)


def test_negation_and_uncertainty():
    vec = extract_labels("There is no pleural effusion. A possible opacity is seen.")
    assert vec["effusion"].state == "negative"
    assert vec["opacity"].state == "uncertain"
    vec = extract_labels("The heart is without edema.")
    assert vec["edema"].state == "negative"


def test_total_on_arbitrary_text():
    vec = extract_labels("qwerty %% 123 !!")
    assert all(vec[k].state == "no_mention" for k in vec.entries)
    vec = extract_labels("")
    assert all(vec[k].state == "no_mention" for k in vec.entries)


def test_no_finding_suppressed_by_positive_pathology():
    vec = extract_labels("The lungs are clear. There is severe bilateral edema.")
    assert vec["edema"].state == "positive"
    assert vec["no_finding"].state == "no_mention"


def test_negative_mentions_keep_no_finding_eligible():
    vec = extract_labels("No acute findings. There is no effusion.")
    assert vec["no_finding"].state == "positive"
    assert vec["effusion"].state == "negative"


@st.composite
def findings_lists(draw):
    if draw(st.booleans()):
        return [NO_FINDING]
    kinds = draw(st.lists(st.sampled_from(PATHOLOGY_KINDS), min_size=1, max_size=2, unique=True))
    return [
        Finding(kind, draw(st.sampled_from(VALID_SIDES[kind])), draw(st.sampled_from(SEVERITIES)))
        for kind in kinds
    ]


@settings(max_examples=150, deadline=None)
@given(
    findings=findings_lists(),
    style=st.sampled_from(["verbose", "concise"]),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_grammar_round_trip(findings, style, seed):
    text = render_report(findings, style, seed)
    assert extract_labels(text) == LabelVector.from_findings(findings)
