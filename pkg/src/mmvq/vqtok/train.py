"""Tokenizer training: L1 reconstruction + quantizer losses + weighted CIP.

No adversarial or perceptual terms. Per-epoch codebook usage histograms are
logged; when usage entropy falls below the configured floor a warning is
emitted and, if enabled, dead entries are re-seeded from encoder outputs of
the current batch (seeded, so training stays deterministic).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..numcore import AdamWHyper, adamw_step, init_adamw, np_rng
from ..synthcorpus.corpus import CorpusManifest
from .model import VqConfig, VqModel, build_vq
from .probe import ProbeModel, cip_loss, images_tensor

log = logging.getLogger(__name__)

CIP_WEIGHT_DEFAULT = 100.0  # documented default weight of the feature loss


@dataclass
class VqTrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 12
    cip_weight: float = CIP_WEIGHT_DEFAULT
    cip_enabled: bool = True
    usage_entropy_floor: float = 0.25  # fraction of ln(K)
    reinit_dead: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VqEpochStats:
    epoch: int
    loss: float
    recon_l1: float
    codebook: float
    commitment: float
    cip: float
    usage_entropy: float
    dead_entries: int


def _usage_entropy(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def _seed_codebook(model: VqModel, x: torch.Tensor, seed: int) -> None:
    """Initialize codebook rows from encoder latents of a seeded sample.

    Keeps the codebook inside the latent cloud at step 0, which prevents
    immediate collapse onto a handful of entries; jitter keeps rows distinct.
    """
    cfg = model.config
    with torch.no_grad():
        ze = model.encode_latents(x).reshape(-1, cfg.n_z)
        rng = np_rng(seed, "codebook_init")
        replace = ze.shape[0] < cfg.k_img
        pick = rng.choice(ze.shape[0], size=cfg.k_img, replace=replace)
        jitter = torch.from_numpy(
            rng.normal(0.0, 0.01, size=(cfg.k_img, cfg.n_z))
        ).to(ze.dtype)
        model.codebook.copy_(ze[torch.from_numpy(pick)] + jitter)


def train_vq(
    corpus: CorpusManifest,
    probe: ProbeModel,
    config: VqTrainConfig,
    vq_config: VqConfig | None = None,
) -> tuple[VqModel, list[VqEpochStats]]:
    vq_config = vq_config or VqConfig()
    model = build_vq(vq_config, config.seed)
    train = corpus.split("train")
    x_all = images_tensor(train, vq_config.torch_dtype)
    _seed_codebook(model, x_all[: max(4 * config.batch_size, vq_config.k_img)], config.seed)
    params = dict(model.named_parameters())
    state = init_adamw(params, AdamWHyper(lr=config.lr))
    rng = np_rng(config.seed, "vq_epochs")
    n = len(train)
    k = vq_config.k_img
    floor = config.usage_entropy_floor * math.log(k)

    history: list[VqEpochStats] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        usage = np.zeros(k, dtype=np.int64)
        sums = {"loss": 0.0, "l1": 0.0, "cb": 0.0, "cm": 0.0, "cip": 0.0}
        n_batches = 0
        last_ze = None
        for start in range(0, n, config.batch_size):
            idx = torch.from_numpy(order[start : start + config.batch_size].copy())
            x = x_all[idx]
            recon, indices, terms = model(x)
            l1 = (recon - x).abs().mean()
            loss = l1 + terms["codebook"] + terms["commitment"]
            if config.cip_enabled:
                cip = cip_loss(x, recon, probe)
                loss = loss + config.cip_weight * cip
            else:
                cip = torch.zeros(())
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite tokenizer loss at epoch {epoch}")
            for p in params.values():
                p.grad = None
            loss.backward()
            adamw_step(params, state)
            usage += np.bincount(indices.reshape(-1).numpy(), minlength=k)
            with torch.no_grad():
                last_ze = model.encode_latents(x).reshape(-1, vq_config.n_z)
            sums["loss"] += loss.item()
            sums["l1"] += l1.item()
            sums["cb"] += terms["codebook"].item()
            sums["cm"] += terms["commitment"].item()
            sums["cip"] += float(cip.item())
            n_batches += 1

        entropy = _usage_entropy(usage)
        dead = int((usage == 0).sum())
        if entropy < floor:
            log.warning(
                "codebook usage entropy %.3f below floor %.3f (epoch %d, %d dead entries)",
                entropy, floor, epoch, dead,
            )
        if config.reinit_dead and dead and last_ze is not None:
            dead_idx = np.nonzero(usage == 0)[0]
            pick = np_rng(config.seed, "dead_reinit", epoch).integers(
                0, last_ze.shape[0], size=dead
            )
            with torch.no_grad():
                model.codebook[torch.from_numpy(dead_idx)] = last_ze[
                    torch.from_numpy(pick)
                ].detach()
        history.append(
            VqEpochStats(
                epoch=epoch,
                loss=sums["loss"] / n_batches,
                recon_l1=sums["l1"] / n_batches,
                codebook=sums["cb"] / n_batches,
                commitment=sums["cm"] / n_batches,
                cip=sums["cip"] / n_batches,
                usage_entropy=entropy,
                dead_entries=dead,
            )
        )
    return model, history
