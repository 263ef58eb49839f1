"""Decoder-only causal transformer with an expandable token embedding.

Pre-norm blocks, learned absolute positions, untied output head. The head
is expanded in lockstep with the embedding table, so logits restricted to
the pre-expansion vocabulary are bit-identical before and after expansion
for any text-only input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import torch
from torch import nn

from ..numcore import torch_generator

INIT_STD = 0.02
EXPAND_INIT_STD = 0.02


@dataclass
class LmConfig:
    k_text: int
    k_img: int = 0
    d_e: int = 128
    n_layers: int = 4
    n_heads: int = 4
    context_length: int = 320
    dtype: str = "float32"

    @property
    def vocab_size(self) -> int:
        return self.k_text + self.k_img

    @property
    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]

    def to_dict(self) -> dict:
        return asdict(self)


class Block(nn.Module):
    def __init__(self, d: int, n_heads: int, dtype: torch.dtype):
        super().__init__()
        if d % n_heads:
            raise ValueError(f"d_e={d} not divisible by heads={n_heads}")
        self.n_heads = n_heads
        self.head_dim = d // n_heads
        self.ln1 = nn.LayerNorm(d, dtype=dtype)
        self.attn_qkv = nn.Linear(d, 3 * d, dtype=dtype)
        self.attn_out = nn.Linear(d, d, dtype=dtype)
        self.ln2 = nn.LayerNorm(d, dtype=dtype)
        self.mlp_in = nn.Linear(d, 4 * d, dtype=dtype)
        self.mlp_out = nn.Linear(4 * d, d, dtype=dtype)

    def forward(self, x: torch.Tensor, causal_mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        qkv = self.attn_qkv(h).view(b, t, 3, self.n_heads, self.head_dim)
        q, k, v = (qkv[:, :, i].transpose(1, 2) for i in range(3))  # [B, H, T, hd]
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(causal_mask[:t, :t], float("-inf"))
        ctx = torch.softmax(scores, dim=-1) @ v
        x = x + self.attn_out(ctx.transpose(1, 2).reshape(b, t, d))
        h = self.ln2(x)
        x = x + self.mlp_out(torch.nn.functional.gelu(self.mlp_in(h), approximate="tanh"))
        return x


class TransformerLM(nn.Module):
    def __init__(self, config: LmConfig):
        super().__init__()
        self.config = config
        dt = config.torch_dtype
        v = config.vocab_size
        self.embed = nn.Embedding(v, config.d_e, dtype=dt)
        self.pos = nn.Embedding(config.context_length, config.d_e, dtype=dt)
        self.blocks = nn.ModuleList(
            Block(config.d_e, config.n_heads, dt) for _ in range(config.n_layers)
        )
        self.ln_f = nn.LayerNorm(config.d_e, dtype=dt)
        self.head = nn.Linear(config.d_e, v, bias=False, dtype=dt)
        mask = torch.triu(
            torch.ones(config.context_length, config.context_length, dtype=torch.bool), diagonal=1
        )
        self.register_buffer("causal_mask", mask, persistent=False)
        # record of the last expand_vocab call: {"k_text": ..., "seed": ...}
        self.expansion_record: dict | None = None

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        b, t = ids.shape
        if t > self.config.context_length:
            raise ValueError(f"sequence length {t} exceeds context {self.config.context_length}")
        positions = torch.arange(t, device=ids.device)
        x = self.embed(ids) + self.pos(positions)[None]
        for block in self.blocks:
            x = block(x, self.causal_mask)
        return self.head(self.ln_f(x))

    def params_dict(self) -> dict[str, torch.nn.Parameter]:
        return dict(self.named_parameters())


def _init_params(model: TransformerLM, seed: int) -> None:
    gen = torch_generator(seed, "lm_init")
    with torch.no_grad():
        for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
            is_ln = ".ln" in name or name.startswith("ln_f")
            if is_ln:
                p.fill_(1.0 if name.endswith("weight") else 0.0)
            elif name.endswith("bias"):
                p.fill_(0.0)
            else:
                p.copy_(torch.empty_like(p).normal_(0.0, INIT_STD, generator=gen))


def build_lm(config: LmConfig, seed: int) -> TransformerLM:
    model = TransformerLM(config)
    _init_params(model, seed)
    return model


def expand_vocab(model: TransformerLM, k_img: int, seed: int) -> TransformerLM:
    """Append k_img trainable rows to the embedding and output head.

    Rows [0, K_text) are preserved bit-exactly; new rows are N(0, 0.02^2)
    draws from the given seed. The whole table stays trainable.
    """
    if k_img < 0:
        raise ValueError(f"k_img must be non-negative, got {k_img}")
    old = model.config
    new_config = LmConfig(**{**old.to_dict(), "k_img": old.k_img + k_img})
    out = TransformerLM(new_config)
    with torch.no_grad():
        state = model.state_dict()
        for name, p in out.named_parameters():
            if name in ("embed.weight", "head.weight"):
                continue
            p.copy_(state[name])
        gen = torch_generator(seed, "vocab_expand")
        for name in ("embed.weight", "head.weight"):
            old_w = state[name]
            new_w = dict(out.named_parameters())[name]
            new_w[: old_w.shape[0]].copy_(old_w)
            if k_img:
                new_w[old_w.shape[0]:].copy_(
                    torch.empty_like(new_w[old_w.shape[0]:]).normal_(
                        0.0, EXPAND_INIT_STD, generator=gen
                    )
                )
    out.expansion_record = {"k_text": old.vocab_size, "seed": seed}
    return out
