"""Decoding: greedy / temperature / top-k, with an image-constrained mode.

Image-constrained decoding masks the logits to the image-token subspace for
exactly d_z steps and then stops (the post-image continuation is forced),
so a report-to-image response is always a well-formed token grid. Stops are
EOS, the "### End" marker, or the new-token budget; stop markers are not
part of the returned ids. PAD is never sampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..numcore import torch_generator
from .model import TransformerLM
from .vocab import Vocab

END_MARKER_TEXT = "### End"


@dataclass
class SamplerConfig:
    mode: str = "greedy"  # greedy | temperature | top_k
    temperature: float = 1.0
    k: int = 1
    max_new_tokens: int = 96
    image_constrained: bool = False
    d_z: int = 64

    def __post_init__(self):
        if self.mode not in ("greedy", "temperature", "top_k"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.k < 1:
            raise ValueError("top_k k must be >= 1")


def _pick(logits: torch.Tensor, cfg: SamplerConfig, gen: torch.Generator) -> torch.Tensor:
    """Next-token ids for a [B, V] logit block."""
    if cfg.mode == "greedy":
        return logits.argmax(dim=-1)
    scaled = logits / cfg.temperature
    if cfg.mode == "top_k":
        k = min(cfg.k, scaled.shape[-1])
        vals, idx = torch.topk(scaled, k, dim=-1)
        probs = torch.softmax(vals, dim=-1)
        choice = torch.multinomial(probs, 1, generator=gen).squeeze(-1)
        return idx.gather(-1, choice.unsqueeze(-1)).squeeze(-1)
    probs = torch.softmax(scaled, dim=-1)
    return torch.multinomial(probs, 1, generator=gen).squeeze(-1)


@torch.no_grad()
def sample_batch(
    model: TransformerLM,
    vocab: Vocab,
    prompts: list[list[int]],
    cfg: SamplerConfig,
    seed: int = 0,
) -> list[list[int]]:
    """Decode a batch of prompts in lockstep; returns new ids per prompt."""
    ctx = model.config.context_length
    for p in prompts:
        if len(p) >= ctx:
            raise ValueError(f"prompt of length {len(p)} leaves no room in context {ctx}")
    budget = cfg.d_z if cfg.image_constrained else cfg.max_new_tokens
    budget = min(budget, ctx - max(len(p) for p in prompts))
    if cfg.image_constrained and budget < cfg.d_z:
        raise ValueError("prompt too long for a full image span")

    b = len(prompts)
    gen = torch_generator(seed, "sample")
    max_len = max(len(p) for p in prompts) + budget
    ids = torch.full((b, max_len), vocab.pad_id, dtype=torch.long)
    for i, p in enumerate(prompts):
        ids[i, : len(p)] = torch.tensor(p, dtype=torch.long)
    lengths = torch.tensor([len(p) for p in prompts])
    done = torch.zeros(b, dtype=torch.bool)
    generated: list[list[int]] = [[] for _ in range(b)]

    hash_id = vocab.index.get("###")
    end_id = vocab.index.get("End")
    eos = vocab.eos_id

    for _ in range(budget):
        t_cur = int(lengths.max().item())
        logits = model(ids[:, :t_cur])
        step_logits = logits[torch.arange(b), lengths - 1].to(torch.float64)
        step_logits[:, vocab.pad_id] = float("-inf")
        if cfg.image_constrained:
            step_logits[:, : vocab.k_text] = float("-inf")
        next_ids = _pick(step_logits, cfg, gen)
        for i in range(b):
            if done[i]:
                continue
            nid = int(next_ids[i])
            if not cfg.image_constrained:
                if nid == eos:
                    done[i] = True
                    continue
                if (
                    end_id is not None
                    and hash_id is not None
                    and nid == end_id
                    and generated[i]
                    and generated[i][-1] == hash_id
                ):
                    generated[i].pop()  # drop the "###" of the end marker
                    done[i] = True
                    continue
            generated[i].append(nid)
            ids[i, lengths[i]] = nid
            lengths[i] += 1
        if bool(done.all()):
            break
        if cfg.image_constrained and all(len(g) >= cfg.d_z for g in generated):
            break
    return generated


def sample(
    model: TransformerLM,
    vocab: Vocab,
    prompt_ids: list[int],
    cfg: SamplerConfig,
    seed: int = 0,
) -> list[int]:
    return sample_batch(model, vocab, [prompt_ids], cfg, seed=seed)[0]
