"""Prompt records, tokenized examples with the response loss mask, and the
two training objectives.

The mask is 0 through the response key inclusive, 1 on the response tokens
plus the terminating EOS, and 0 on the trailing "### End" boilerplate. The
joint objective instead counts every position after the first, so its sum
always dominates the conditional (instruct) sum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from ..lmcore.model import TransformerLM
from ..lmcore.vocab import Vocab, ids_from_image_tokens
from ..vqtok.model import ImageTokens
from .template import END_MARKER, PREAMBLE, RESPONSE_KEY, render_template, serialize_image_span

TASKS = ("NL_IF", "REPORT_TO_CXR", "CXR_TO_REPORT", "CXR_VQA")


@dataclass
class PromptRecord:
    task: str
    instruction: str
    input: "str | ImageTokens"
    response: "str | ImageTokens"
    source_study: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        img_in = isinstance(self.input, ImageTokens)
        img_out = isinstance(self.response, ImageTokens)
        if self.task == "REPORT_TO_CXR" and not (not img_in and img_out):
            raise ValueError("REPORT_TO_CXR takes a text input and an image response")
        if self.task in ("CXR_TO_REPORT", "CXR_VQA") and not (img_in and not img_out):
            raise ValueError(f"{self.task} takes an image input and a text response")
        if self.task == "NL_IF" and (img_in or img_out):
            raise ValueError("NL_IF is text-only")


@dataclass
class TokenizedExample:
    ids: list[int]
    mask: list[int]
    x_len: int
    y_len: int
    task: str
    study_id: str | None = None

    def __post_init__(self):
        if len(self.ids) != len(self.mask):
            raise ValueError("ids and mask must align")


def render_record(record: PromptRecord, inference: bool = False) -> str:
    """Audit rendering with image content as a VQ placeholder span."""
    input_text = (
        serialize_image_span(record.input.indices)
        if isinstance(record.input, ImageTokens)
        else record.input
    )
    if inference:
        from .template import render_inference

        return render_inference(record.instruction, input_text)
    response_text = (
        serialize_image_span(record.response.indices)
        if isinstance(record.response, ImageTokens)
        else record.response
    )
    return render_template(record.instruction, input_text, response_text)


def _segment_ids(segment: "str | ImageTokens", vocab: Vocab) -> list[int]:
    if isinstance(segment, ImageTokens):
        return ids_from_image_tokens(segment.indices, vocab)
    return vocab.encode(segment)


def prompt_ids(record: PromptRecord, vocab: Vocab) -> list[int]:
    """Token ids of the inference prompt (ends with the response key)."""
    return (
        vocab.encode(PREAMBLE)
        + vocab.encode("### Instruction:")
        + _segment_ids(record.instruction, vocab)
        + vocab.encode("Input:")
        + _segment_ids(record.input, vocab)
        + vocab.encode(RESPONSE_KEY)
    )


def build_example(record: PromptRecord, vocab: Vocab, context_length: int) -> TokenizedExample:
    x_ids = prompt_ids(record, vocab)
    y_ids = _segment_ids(record.response, vocab)
    if not y_ids:
        raise ValueError(f"empty response (study {record.source_study!r})")
    end_ids = vocab.encode(END_MARKER)
    ids = x_ids + y_ids + [vocab.eos_id] + end_ids
    if len(ids) > context_length:
        raise ValueError(
            f"example of {len(ids)} tokens exceeds context {context_length} "
            f"(study {record.source_study!r})"
        )
    mask = [0] * len(x_ids) + [1] * (len(y_ids) + 1) + [0] * len(end_ids)
    return TokenizedExample(
        ids=ids,
        mask=mask,
        x_len=len(x_ids),
        y_len=len(y_ids),
        task=record.task,
        study_id=record.source_study,
    )


def collate(examples: list[TokenizedExample], pad_id: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Right-pad to the batch max; returns (ids, instruct mask, length mask)."""
    max_len = max(len(e.ids) for e in examples)
    ids = torch.full((len(examples), max_len), pad_id, dtype=torch.long)
    mask = torch.zeros((len(examples), max_len), dtype=torch.long)
    inside = torch.zeros((len(examples), max_len), dtype=torch.long)
    for i, e in enumerate(examples):
        n = len(e.ids)
        ids[i, :n] = torch.tensor(e.ids, dtype=torch.long)
        mask[i, :n] = torch.tensor(e.mask, dtype=torch.long)
        inside[i, :n] = 1
    return ids, mask, inside


def batch_nll(
    model: TransformerLM,
    examples: list[TokenizedExample],
    vocab: Vocab,
    objective: str = "instruct",
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-example (sum NLL, token count) under teacher forcing.

    objective="instruct" counts response tokens plus EOS (Eq-style
    conditional loss); objective="joint" counts every position after the
    first within the example.
    """
    if objective not in ("instruct", "joint"):
        raise ValueError(f"unknown objective {objective!r}")
    ids, mask, inside = collate(examples, vocab.pad_id)
    logits = model(ids[:, :-1])
    targets = ids[:, 1:]
    tmask = mask[:, 1:] if objective == "instruct" else inside[:, 1:]
    maxes = logits.max(dim=-1, keepdim=True).values
    shifted = logits - maxes
    logz = shifted.exp().sum(dim=-1).log()
    picked = shifted.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    nll = logz - picked
    fmask = tmask.to(logits.dtype)
    return (nll * fmask).sum(dim=1), tmask.sum(dim=1)


def _loss_triplet(model, examples, vocab, objective) -> tuple[float, float, int]:
    single = isinstance(examples, TokenizedExample)
    batch = [examples] if single else list(examples)
    with torch.no_grad():
        sums, counts = batch_nll(model, batch, vocab, objective)
    total = float(sums.sum().item())
    count = int(counts.sum().item())
    return (total / count if count else 0.0), total, count


def instruct_loss(model, examples, vocab) -> tuple[float, float, int]:
    """(mean over masked tokens, sum, count) of the conditional loss."""
    return _loss_triplet(model, examples, vocab, "instruct")


def joint_loss(model, examples, vocab) -> tuple[float, float, int]:
    """(mean, sum, count) over all positions after the first."""
    return _loss_triplet(model, examples, vocab, "joint")


def export_examples(examples: list[TokenizedExample], path: str | Path) -> None:
    """Audit/replay serialization: one JSON object per example."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            fh.write(
                json.dumps(
                    {
                        "ids": e.ids,
                        "mask": e.mask,
                        "x_len": e.x_len,
                        "y_len": e.y_len,
                        "task": e.task,
                        "study_id": e.study_id,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
