"""Numerical core shared by every model in the package.

Dense tensors are CPU torch tensors and reverse-mode gradients come from
torch.autograd; this module owns everything numerical that sits on top of
that substrate: deterministic seeding, the AdamW optimizer with decoupled
weight decay, global-norm gradient clipping, the masked cross-entropy used
by all training objectives, and a central finite-difference gradient oracle
used to validate every loss path.

Convention: training tensors are float32 for speed, every oracle or
acceptance check runs in float64 (``ORACLE_DTYPE``).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import torch

ORACLE_DTYPE = torch.float64
TRAIN_DTYPE = torch.float32

# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------


def derive_seed(*parts) -> int:
    """Fold arbitrary (hashable, repr-stable) parts into a 63-bit seed.

    Uses SHA-256 so streams derived from (base_seed, component_name, index)
    are independent and reproducible across platforms and processes.
    """
    digest = hashlib.sha256("\x1f".join(repr(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def np_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))


def torch_generator(*parts) -> torch.Generator:
    gen = torch.Generator(device="cpu")
    gen.manual_seed(derive_seed(*parts))
    return gen


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------


@dataclass
class AdamWHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class AdamWState:
    """Per-parameter first/second moments plus a shared step counter."""

    hyper: AdamWHyper
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)
    step: int = 0


def init_adamw(params: dict[str, torch.Tensor], hyper: AdamWHyper) -> AdamWState:
    state = AdamWState(hyper=hyper)
    for name, p in params.items():
        state.m[name] = torch.zeros_like(p, requires_grad=False)
        state.v[name] = torch.zeros_like(p, requires_grad=False)
    return state


@torch.no_grad()
def adamw_step(params: dict[str, torch.Tensor], state: AdamWState) -> None:
    """One AdamW update over all parameters, in place.

    Weight decay is decoupled: the parameter is shrunk multiplicatively by
    (1 - lr * wd) from its pre-step value, never folded into the gradient.
    Moments are bias-corrected with the post-increment step count.
    """
    h = state.hyper
    state.step += 1
    t = state.step
    bc1 = 1.0 - h.beta1**t
    bc2 = 1.0 - h.beta2**t
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {tuple(g.shape)} does not match parameter "
                f"{name!r} shape {tuple(p.shape)}"
            )
        m = state.m[name]
        v = state.v[name]
        m.mul_(h.beta1).add_(g, alpha=1.0 - h.beta1)
        v.mul_(h.beta2).addcmul_(g, g, value=1.0 - h.beta2)
        if h.weight_decay != 0.0:
            p.mul_(1.0 - h.lr * h.weight_decay)
        m_hat = m / bc1
        v_hat = v / bc2
        p.add_(m_hat / (v_hat.sqrt() + h.eps), alpha=-h.lr)


@torch.no_grad()
def clip_global_norm(params: Iterable[torch.Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = torch.sqrt(sum((g.to(torch.float64) ** 2).sum() for g in grads)).item()
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g.mul_(scale)
    return total


# ---------------------------------------------------------------------------
# Masked cross-entropy
# ---------------------------------------------------------------------------


def softmax_cross_entropy(
    logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor
) -> tuple[torch.Tensor, int]:
    """Sum of -log softmax(logits)[t, target_t] over mask==1 positions.

    Accepts ``[T, V]`` or ``[B, T, V]`` logits with matching targets/mask.
    Stabilized by max-subtraction. Returns (sum_loss, masked position count);
    an all-zero mask yields (0, 0) and the caller decides what that means.
    """
    if logits.dim() == 2:
        logits = logits.unsqueeze(0)
        targets = targets.unsqueeze(0)
        mask = mask.unsqueeze(0)
    if targets.shape != logits.shape[:2] or mask.shape != logits.shape[:2]:
        raise ValueError("targets/mask shape must match logits[:2]")
    vocab = logits.shape[-1]
    if ((targets < 0) | (targets >= vocab)).any():
        raise ValueError(f"target ids out of range [0, {vocab})")
    maxes = logits.max(dim=-1, keepdim=True).values
    shifted = logits - maxes
    logz = shifted.exp().sum(dim=-1).log()
    picked = shifted.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    nll = logz - picked
    fmask = mask.to(logits.dtype)
    count = int(mask.sum().item())
    return (nll * fmask).sum(), count


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------


@dataclass
class GradCheckResult:
    max_rel_err: float
    worst: tuple[str, int] | None
    n_coords: int
    failures: list[tuple[str, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and np.isfinite(self.max_rel_err)


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: dict[str, torch.Tensor],
    eps: float = 1e-5,
    max_coords_per_param: int = 24,
    seed: int = 0,
) -> GradCheckResult:
    """Compare reverse-mode gradients against central finite differences.

    ``loss_fn`` must be a deterministic closure over ``params`` returning a
    scalar; coordinates are subsampled per parameter with a seeded RNG.
    Relative error per coordinate is |analytic - numeric| / max(1e-8,
    |numeric|); the max over all probed coordinates is returned. Non-finite
    losses at a probe point are recorded as failures with their coordinate.
    """
    for p in params.values():
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    if not torch.isfinite(loss):
        return GradCheckResult(float("inf"), None, 0, [("<base>", -1, "non-finite loss")])
    loss.backward()
    analytic = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in params.items()
    }

    rng = np_rng(seed, "grad_check")
    max_rel = 0.0
    worst: tuple[str, int] | None = None
    n_coords = 0
    failures: list[tuple[str, int, str]] = []
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            n = flat.numel()
            idx = np.arange(n) if n <= max_coords_per_param else rng.choice(
                n, size=max_coords_per_param, replace=False
            )
            for i in sorted(int(j) for j in idx):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = loss_fn().item()
                flat[i] = orig - eps
                f_minus = loss_fn().item()
                flat[i] = orig
                n_coords += 1
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    failures.append((name, i, "non-finite loss at probe"))
                    continue
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = analytic[name].view(-1)[i].item()
                rel = abs(a - numeric) / max(1e-8, abs(numeric))
                if rel > max_rel:
                    max_rel = rel
                    worst = (name, i)
    return GradCheckResult(max_rel, worst, n_coords, failures)
