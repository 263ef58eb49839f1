"""Vector-quantized image tokenizer: encoder, codebook, decoder.

A 32x32 image is downsampled x4 to an 8x8 latent grid (d_z = 64 positions),
each position quantized to its nearest codebook row by Euclidean distance
with ties broken toward the lowest index. The straight-through estimator
copies decoder-side gradients past the quantization step; the codebook
learns through the ||sg(ze) - e||^2 term and the encoder additionally
through the beta-weighted commitment term.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from ..numcore import torch_generator

DEFAULT_BETA = 0.25


@dataclass
class VqConfig:
    k_img: int = 128
    n_z: int = 32
    image_size: int = 32
    channels: tuple[int, int] = (32, 64)
    beta: float = DEFAULT_BETA
    dtype: str = "float32"

    @property
    def grid(self) -> int:
        return self.image_size // 4  # two stride-2 stages

    @property
    def d_z(self) -> int:
        return self.grid * self.grid

    @property
    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @staticmethod
    def from_dict(d: dict) -> "VqConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return VqConfig(**d)


@dataclass
class ImageTokens:
    indices: np.ndarray  # int64, length d_z

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.ndim != 1:
            raise ValueError("token indices must be 1-D")

    def validate(self, config: VqConfig) -> None:
        if len(self.indices) != config.d_z:
            raise ValueError(f"expected {config.d_z} tokens, got {len(self.indices)}")
        bad = np.nonzero((self.indices < 0) | (self.indices >= config.k_img))[0]
        if bad.size:
            raise ValueError(
                f"token index {int(self.indices[bad[0]])} at position {int(bad[0])} "
                f"out of range [0, {config.k_img})"
            )

    def __len__(self) -> int:
        return len(self.indices)


def quantize(
    latents: torch.Tensor, codebook: torch.Tensor, beta: float = DEFAULT_BETA
) -> tuple[torch.Tensor, torch.Tensor, dict[str, torch.Tensor]]:
    """Nearest-codebook quantization with straight-through gradients.

    latents: [P, n_z] (or [B, P, n_z]); codebook: [K, n_z]. Returns
    (indices, quantized latents carrying the straight-through graph,
    {"codebook": ..., "commitment": ...} loss terms). Distances are the
    direct squared differences so exact ties resolve to the lowest index.
    """
    if not torch.isfinite(latents).all():
        raise ValueError("non-finite latents")
    flat = latents.reshape(-1, latents.shape[-1])
    d2 = ((flat.unsqueeze(1) - codebook.unsqueeze(0)) ** 2).sum(-1)
    indices = torch.from_numpy(np.argmin(d2.detach().cpu().numpy(), axis=1))
    picked = codebook[indices].reshape(latents.shape)
    codebook_loss = ((latents.detach() - picked) ** 2).mean()
    commitment_loss = beta * ((latents - picked.detach()) ** 2).mean()
    # straight-through with a bit-exact forward value: x - x.detach() is
    # exactly zero, so quantized == picked, while d(quantized)/d(latents) = 1
    quantized = picked.detach() + (latents - latents.detach())
    return indices.reshape(latents.shape[:-1]), quantized, {
        "codebook": codebook_loss,
        "commitment": commitment_loss,
    }


class VqModel(nn.Module):
    def __init__(self, config: VqConfig):
        super().__init__()
        self.config = config
        dt = config.torch_dtype
        c1, c2 = config.channels
        nz = config.n_z
        self.enc = nn.Sequential(
            nn.Conv2d(1, c1, 3, stride=2, padding=1, dtype=dt),
            nn.ReLU(),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1, dtype=dt),
            nn.ReLU(),
            nn.Conv2d(c2, nz, 1, dtype=dt),
        )
        self.dec = nn.Sequential(
            nn.Conv2d(nz, c2, 3, padding=1, dtype=dt),
            nn.ReLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c2, c1, 3, padding=1, dtype=dt),
            nn.ReLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c1, 1, 3, padding=1, dtype=dt),
        )
        self.codebook = nn.Parameter(torch.empty(config.k_img, nz, dtype=dt))

    def encode_latents(self, x: torch.Tensor) -> torch.Tensor:
        """[B, 1, H, W] -> [B, d_z, n_z] row-major over the latent grid."""
        z = self.enc(x)  # [B, n_z, g, g]
        b, nz, g, _ = z.shape
        return z.permute(0, 2, 3, 1).reshape(b, g * g, nz)

    def decode_latents(self, zq: torch.Tensor) -> torch.Tensor:
        b, p, nz = zq.shape
        g = self.config.grid
        x = zq.reshape(b, g, g, nz).permute(0, 3, 1, 2)
        return torch.sigmoid(self.dec(x))

    def forward(self, x: torch.Tensor):
        ze = self.encode_latents(x)
        indices, zq, terms = quantize(ze, self.codebook, self.config.beta)
        recon = self.decode_latents(zq)
        return recon, indices, terms

    def params_dict(self) -> dict[str, torch.nn.Parameter]:
        return dict(self.named_parameters())


def build_vq(config: VqConfig, seed: int) -> VqModel:
    model = VqModel(config)
    gen = torch_generator(seed, "vq_init")
    with torch.no_grad():
        for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
            if name.endswith("bias"):
                p.fill_(0.0)
            elif name == "codebook":
                p.copy_(torch.empty_like(p).uniform_(-0.5, 0.5, generator=gen))
            else:
                p.copy_(torch.empty_like(p).normal_(0.0, 0.05, generator=gen))
    return model


def _to_batch(image: np.ndarray | torch.Tensor, config: VqConfig) -> torch.Tensor:
    if isinstance(image, np.ndarray):
        image = torch.from_numpy(np.ascontiguousarray(image))
    image = image.to(config.torch_dtype)
    if image.dim() == 2:
        image = image[None, None]
    elif image.dim() == 3:
        image = image[:, None]
    if image.shape[-2:] != (config.image_size, config.image_size):
        raise ValueError(
            f"image shape {tuple(image.shape[-2:])} does not match configured "
            f"size {config.image_size}"
        )
    return image


@torch.no_grad()
def encode(image: np.ndarray | torch.Tensor, model: VqModel) -> ImageTokens:
    x = _to_batch(image, model.config)
    ze = model.encode_latents(x)
    indices, _, _ = quantize(ze, model.codebook, model.config.beta)
    return ImageTokens(indices[0].cpu().numpy())


@torch.no_grad()
def encode_batch(images: np.ndarray, model: VqModel) -> np.ndarray:
    x = _to_batch(images, model.config)
    ze = model.encode_latents(x)
    indices, _, _ = quantize(ze, model.codebook, model.config.beta)
    return indices.cpu().numpy()


@torch.no_grad()
def decode(tokens: ImageTokens, model: VqModel) -> np.ndarray:
    tokens.validate(model.config)
    zq = model.codebook[torch.from_numpy(tokens.indices)][None]
    img = model.decode_latents(zq)[0, 0]
    return torch.clamp(img, 0.0, 1.0).cpu().numpy().astype(np.float32)


@torch.no_grad()
def decode_batch(token_rows: np.ndarray, model: VqModel) -> np.ndarray:
    rows = np.asarray(token_rows, dtype=np.int64)
    for r, row in enumerate(rows):
        ImageTokens(row).validate(model.config)
    zq = model.codebook[torch.from_numpy(rows)]
    imgs = model.decode_latents(zq)[:, 0]
    return torch.clamp(imgs, 0.0, 1.0).cpu().numpy().astype(np.float32)
