"""Authored text-only instruction/response pairs over the grammar vocabulary.

A small fixed set (paraphrase, counting, yes/no, lists, echo) that plays
the anti-forgetting role of a general instruction-following corpus in the
task mix. Items are built deterministically at import time.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..synthcorpus.findings import Finding, PATHOLOGY_KINDS, SEVERITIES
from ..synthcorpus.grammar import concise_sentence

_NUMBER_WORDS = {1: "one", 2: "two", 3: "three", 4: "four"}
_SEV_RANK = {"mild": 0, "moderate": 1, "severe": 2}


@dataclass(frozen=True)
class NlifItem:
    instruction: str
    input: str
    response: str


def _build_items() -> list[NlifItem]:
    items: list[NlifItem] = []

    # severity ordering, yes/no
    for a in SEVERITIES:
        for b in SEVERITIES:
            if a == b:
                continue
            ans = "Yes." if _SEV_RANK[a] > _SEV_RANK[b] else "No."
            items.append(NlifItem(f"Answer yes or no. Is {a} worse than {b}?", "", ans))

    # side logic, yes/no
    items += [
        NlifItem("Answer yes or no. Is left the opposite of right?", "", "Yes."),
        NlifItem("Answer yes or no. Is left the same as right?", "", "No."),
        NlifItem("Answer yes or no. Does bilateral mean both sides?", "", "Yes."),
        NlifItem("Answer yes or no. Is bilateral one side only?", "", "No."),
        NlifItem("Answer yes or no. Is left a severity level?", "", "No."),
        NlifItem("Answer yes or no. Is moderate a severity level?", "", "Yes."),
    ]

    # counting over an input list
    count_lists = [
        ["opacity"],
        ["edema", "effusion"],
        ["opacity", "edema"],
        ["cardiomegaly", "pneumothorax"],
        ["opacity", "effusion", "edema"],
        ["effusion", "cardiomegaly", "pneumothorax"],
        ["opacity", "effusion", "edema", "pneumothorax"],
        ["edema"],
    ]
    for kinds in count_lists:
        n = len(kinds)
        noun = "finding" if n == 1 else "findings"
        items.append(
            NlifItem(
                "Count the findings in the input list.",
                ", ".join(kinds),
                f"There {'is' if n == 1 else 'are'} {_NUMBER_WORDS[n]} {noun}.",
            )
        )

    # paraphrase: restate one concise variant as another
    for kind in PATHOLOGY_KINDS:
        side = {"cardiomegaly": None, "edema": "bilateral"}.get(kind, "left")
        for sev in ("mild", "severe"):
            f = Finding(kind, side, sev)
            items.append(
                NlifItem("Restate the input sentence.", concise_sentence(f, 1), concise_sentence(f, 0))
            )

    # fixed lists
    items += [
        NlifItem("List the three severity levels.", "", "Mild, moderate, severe."),
        NlifItem("List the sides a finding can have.", "", "Left, right, bilateral."),
        NlifItem(
            "Name the finding kinds.",
            "",
            "Opacity, effusion, cardiomegaly, edema, pneumothorax.",
        ),
    ]

    # echo
    for phrase in (
        "mild left opacity",
        "no acute findings",
        "severe bilateral edema",
        "the heart is enlarged",
        "moderate right pleural effusion",
        "the lungs are clear",
    ):
        items.append(NlifItem(f"Repeat exactly: {phrase}", "", phrase))

    return items


NLIF_ITEMS: list[NlifItem] = _build_items()


def nlif_texts() -> list[str]:
    out = []
    for item in NLIF_ITEMS:
        out += [item.instruction, item.input, item.response]
    return out
