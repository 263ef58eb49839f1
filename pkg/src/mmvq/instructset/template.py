"""Prompt skeleton and the authored instruction variants.

The training render is the exact concatenation

    <preamble>\n\n### Instruction: <instruction>\nInput: <input>\n\n
    ### Response:<response>\n\n### End

and the inference render truncates immediately after "### Response:". The
empty Input line is retained when there is no input. Image content is
serialized as a "<VQ### ...>" span in the rendered string; tokenization
never goes through that surface form (examples are built from segments).
"""

from __future__ import annotations

import numpy as np

PREAMBLE = (
    "Below is an instruction that describes a task. "
    "Write a response that appropriately completes the request."
)
RESPONSE_KEY = "### Response:"
END_MARKER = "### End"


def serialize_image_span(indices, width: int = 3) -> str:
    return "<" + " ".join(f"VQ{int(i):0{width}d}" for i in indices) + ">"


def render_template(instruction: str, input_text: str, response_text: str) -> str:
    return (
        f"{PREAMBLE}\n\n### Instruction: {instruction}\nInput: {input_text}\n\n"
        f"{RESPONSE_KEY}{response_text}\n\n{END_MARKER}"
    )


def render_inference(instruction: str, input_text: str) -> str:
    return f"{PREAMBLE}\n\n### Instruction: {instruction}\nInput: {input_text}\n\n{RESPONSE_KEY}"


def parse_template(text: str) -> tuple[str, str, str]:
    """Invert render_template; raises ValueError on a malformed render."""
    head = PREAMBLE + "\n\n### Instruction: "
    if not text.startswith(head):
        raise ValueError("missing preamble or instruction key")
    rest = text[len(head):]
    try:
        instruction, rest = rest.split("\nInput: ", 1)
        input_text, rest = rest.split(f"\n\n{RESPONSE_KEY}", 1)
        response_text, tail = rest.split(f"\n\n{END_MARKER}", 1)
    except ValueError as exc:
        raise ValueError(f"malformed template: {exc}") from exc
    if tail:
        raise ValueError("trailing content after end marker")
    return instruction, input_text, response_text


# Ten instruction variants per direction, sampled uniformly during training;
# evaluation fixes variant 0 for reproducibility.
INSTRUCTIONS_CXR_TO_REPORT = [
    "Generate a radiology report for the entered chest image.",
    "Create a radiology report that corresponds to the entered chest image.",
    "Use the entered chest image to generate a corresponding radiology report.",
    "Based on the entered chest image, generate a matching radiology report.",
    "Describe the entered chest image as a radiology report.",
    "Generate a free-text radiology report for the entered chest image.",
    "From the entered chest image, create a corresponding radiology report.",
    "Write a radiology report that matches the entered chest image.",
    "Produce a radiology report consistent with the entered chest image.",
    "Utilize the entered chest image to generate a corresponding radiology report.",
]

INSTRUCTIONS_REPORT_TO_CXR = [
    "Generate a chest image that corresponds to the entered radiology report.",
    "Create a chest image that matches the entered radiology report.",
    "Use the entered radiology report to generate a corresponding chest image.",
    "Based on the entered radiology report, generate a matching chest image.",
    "Create a chest image consistent with the entered radiology report.",
    "Generate a chest image reflecting the findings of the entered radiology report.",
    "From the entered radiology report, create a corresponding chest image.",
    "Generate a matching chest image for the entered radiology report.",
    "Create the chest image described by the entered radiology report.",
    "Utilize the entered radiology report to generate a corresponding chest image.",
]

_INSTRUCTION_LISTS = {
    "CXR_TO_REPORT": INSTRUCTIONS_CXR_TO_REPORT,
    "REPORT_TO_CXR": INSTRUCTIONS_REPORT_TO_CXR,
}


def pick_instruction(task: str, rng: np.random.Generator) -> str:
    """Uniform draw over the task's ten authored variants."""
    if task not in _INSTRUCTION_LISTS:
        raise ValueError(f"task {task!r} has no instruction variant list")
    variants = _INSTRUCTION_LISTS[task]
    return variants[int(rng.integers(len(variants)))]


def instruction_variant(task: str, variant: int) -> str:
    if task not in _INSTRUCTION_LISTS:
        raise ValueError(f"task {task!r} has no instruction variant list")
    return _INSTRUCTION_LISTS[task][variant]


def template_texts() -> list[str]:
    """Fixed template/instruction surface forms (for vocab building)."""
    return [
        PREAMBLE,
        "### Instruction:",
        "Input:",
        RESPONSE_KEY,
        END_MARKER,
        *INSTRUCTIONS_CXR_TO_REPORT,
        *INSTRUCTIONS_REPORT_TO_CXR,
    ]
