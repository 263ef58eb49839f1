"""Frozen feature probe: a small conv classifier over finding-kind presence.

Stands in for an external pretrained lesion classifier. Its penultimate
feature vector (d_f = 64) feeds the clinical-information-preserving loss,
FID, and the generated-image metrics; once trained it is frozen and
hash-stamped.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from ..numcore import AdamWHyper, adamw_step, init_adamw, np_rng, torch_generator
from ..synthcorpus.corpus import CorpusManifest
from ..synthcorpus.findings import KINDS


@dataclass
class ProbeConfig:
    d_f: int = 64
    channels: tuple[int, ...] = (16, 32, 64)
    image_size: int = 32
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 32
    dtype: str = "float32"

    @property
    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ProbeConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return ProbeConfig(**d)


class ProbeModel(nn.Module):
    def __init__(self, config: ProbeConfig):
        super().__init__()
        self.config = config
        dt = config.torch_dtype
        layers: list[nn.Module] = []
        prev = 1
        for i, ch in enumerate(config.channels):
            layers += [nn.Conv2d(prev, ch, 3, stride=1 if i == 0 else 2, padding=1, dtype=dt),
                       nn.ReLU()]
            prev = ch
        layers += [nn.Conv2d(prev, config.d_f, 3, stride=2, padding=1, dtype=dt), nn.ReLU()]
        self.conv = nn.Sequential(*layers)
        self.head = nn.Linear(config.d_f, len(KINDS), dtype=dt)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """[B, 1, H, W] -> [B, d_f]: global average pool of the last conv."""
        return self.conv(x).mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))

    def param_hash(self) -> str:
        blob = b"".join(
            p.detach().cpu().numpy().tobytes()
            for _, p in sorted(self.named_parameters(), key=lambda kv: kv[0])
        )
        return hashlib.sha256(blob).hexdigest()

    def freeze(self) -> "ProbeModel":
        for p in self.parameters():
            p.requires_grad_(False)
        return self


def build_probe(config: ProbeConfig, seed: int) -> ProbeModel:
    model = ProbeModel(config)
    gen = torch_generator(seed, "probe_init")
    with torch.no_grad():
        for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
            if name.endswith("bias"):
                p.fill_(0.0)
            else:
                p.copy_(torch.empty_like(p).normal_(0.0, 0.05, generator=gen))
    return model


def kind_targets(records) -> np.ndarray:
    """[N, 6] multi-hot presence over KINDS (no_finding is one of them)."""
    out = np.zeros((len(records), len(KINDS)), dtype=np.float32)
    for i, rec in enumerate(records):
        for f in rec.findings:
            out[i, KINDS.index(f.kind)] = 1.0
    return out


def images_tensor(records, dtype: torch.dtype) -> torch.Tensor:
    arr = np.stack([rec.image for rec in records])[:, None]
    return torch.from_numpy(arr).to(dtype)


def train_probe(corpus: CorpusManifest, config: ProbeConfig, seed: int) -> ProbeModel:
    """Multi-label BCE on finding-kind presence.

    Trains on frontal train records only (the external classifier this
    stands in for is frontal-trained; rotated lateral decoys would only
    blur the positional findings).
    """
    train = [r for r in corpus.split("train") if r.view == "frontal"]
    if len(train) < 500:
        raise ValueError(f"probe training needs >= 500 frontal train records, got {len(train)}")
    targets = kind_targets(train)
    for j, kind in enumerate(KINDS):
        if targets[:, j].sum() == 0:
            raise ValueError(f"finding kind {kind!r} absent from the train split")

    model = build_probe(config, seed)
    x_all = images_tensor(train, config.torch_dtype)
    y_all = torch.from_numpy(targets).to(config.torch_dtype)
    params = dict(model.named_parameters())
    state = init_adamw(params, AdamWHyper(lr=config.lr))
    rng = np_rng(seed, "probe_epochs")
    n = len(train)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = torch.from_numpy(order[start : start + config.batch_size].copy())
            logits = model(x_all[idx])
            loss = nn.functional.binary_cross_entropy_with_logits(logits, y_all[idx])
            for p in params.values():
                p.grad = None
            loss.backward()
            adamw_step(params, state)
    return model.freeze()


@torch.no_grad()
def probe_features(model: ProbeModel, images: np.ndarray) -> np.ndarray:
    x = torch.from_numpy(np.asarray(images, dtype=np.float32))
    if x.dim() == 3:
        x = x[:, None]
    return model.features(x.to(model.config.torch_dtype)).cpu().numpy()


@torch.no_grad()
def probe_logits(model: ProbeModel, images: np.ndarray) -> np.ndarray:
    x = torch.from_numpy(np.asarray(images, dtype=np.float32))
    if x.dim() == 3:
        x = x[:, None]
    return model(x.to(model.config.torch_dtype)).cpu().numpy()


def cip_loss(x: torch.Tensor, x_hat: torch.Tensor, probe: ProbeModel) -> torch.Tensor:
    """Squared L2 distance between probe features of the two images.

    Symmetric in its arguments and zero iff the features coincide; with the
    probe frozen, gradients reach only the parameters producing x / x_hat.
    """
    fx = probe.features(x)
    fy = probe.features(x_hat)
    return ((fx - fy) ** 2).sum(dim=-1).mean()
