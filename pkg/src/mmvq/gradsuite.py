"""Gradient suite: finite-difference validation of every training loss path.

All checks run in float64 on tiny models. Checks are scoped to parameter
sets whose true local derivative the backward pass is supposed to match:

* transformer block + masked cross-entropy: all parameters;
* commitment loss: encoder parameters (the quantizer's nearest-neighbor
  assignment is locally constant, so central differences are exact here);
* codebook loss: codebook rows;
* reconstruction L1 and the feature-preservation (CIP) loss: decoder
  parameters.

The straight-through copy is a deliberately biased estimator -- the true
derivative of the quantized forward w.r.t. encoder parameters is zero
almost everywhere -- so that path is verified as nonzero gradient *flow*
rather than finite-difference equality.
"""

from __future__ import annotations

import numpy as np
import torch

from .instructset.build import PromptRecord, build_example, batch_nll
from .lmcore.model import LmConfig, build_lm, expand_vocab
from .lmcore.vocab import build_text_vocab
from .numcore import GradCheckResult, grad_check, np_rng
from .vqtok.model import ImageTokens, VqConfig, build_vq, quantize
from .vqtok.probe import ProbeConfig, build_probe, cip_loss

TOLERANCE = 1e-4


def _tiny_lm():
    vocab = build_text_vocab(["a b c d", "### Instruction: Input: ### Response: ### End", "x y z"])
    cfg = LmConfig(
        k_text=vocab.k_text, d_e=16, n_layers=1, n_heads=2, context_length=48, dtype="float64"
    )
    model = build_lm(cfg, seed=11)
    model = expand_vocab(model, 6, seed=12)
    model.config.dtype = "float64"
    return model.to(torch.float64), vocab.with_images(6)


def check_transformer_ce(eps: float = 1e-5) -> GradCheckResult:
    model, vocab = _tiny_lm()
    records = [
        PromptRecord("NL_IF", "a b", "c", "x y z"),
        PromptRecord("CXR_TO_REPORT", "a", ImageTokens(np.array([0, 3, 5, 1])), "c d"),
    ]
    examples = [build_example(r, vocab, 48) for r in records]
    params = model.params_dict()

    def loss_fn():
        sums, counts = batch_nll(model, examples, vocab, "instruct")
        return sums.sum() / counts.sum().to(sums.dtype)

    return grad_check(loss_fn, params, eps=eps, max_coords_per_param=6, seed=3)


def _tiny_vq():
    cfg = VqConfig(k_img=8, n_z=4, image_size=8, channels=(4, 6), dtype="float64")
    model = build_vq(cfg, seed=5).to(torch.float64)
    x = torch.from_numpy(np_rng(7, "vq_gc").uniform(0, 1, size=(2, 1, 8, 8))).to(torch.float64)
    return model, x


def check_commitment_encoder(eps: float = 1e-6) -> GradCheckResult:
    model, x = _tiny_vq()
    enc_params = {f"enc.{n}": p for n, p in model.enc.named_parameters()}

    def loss_fn():
        ze = model.encode_latents(x)
        _, _, terms = quantize(ze, model.codebook, model.config.beta)
        return terms["commitment"]

    return grad_check(loss_fn, enc_params, eps=eps, max_coords_per_param=8, seed=4)


def check_codebook_loss(eps: float = 1e-6) -> GradCheckResult:
    model, x = _tiny_vq()

    def loss_fn():
        ze = model.encode_latents(x)
        _, _, terms = quantize(ze, model.codebook, model.config.beta)
        return terms["codebook"]

    return grad_check(loss_fn, {"codebook": model.codebook}, eps=eps, max_coords_per_param=16, seed=5)


def check_recon_decoder(eps: float = 1e-6) -> GradCheckResult:
    model, x = _tiny_vq()
    dec_params = {f"dec.{n}": p for n, p in model.dec.named_parameters()}

    def loss_fn():
        recon, _, _ = model(x)
        return (recon - x).abs().mean()

    return grad_check(loss_fn, dec_params, eps=eps, max_coords_per_param=8, seed=6)


def check_cip_decoder(eps: float = 1e-6) -> GradCheckResult:
    model, x = _tiny_vq()
    probe = build_probe(ProbeConfig(d_f=8, channels=(4, 6), image_size=8, dtype="float64"), seed=9)
    probe = probe.to(torch.float64).freeze()
    dec_params = {f"dec.{n}": p for n, p in model.dec.named_parameters()}

    def loss_fn():
        recon, _, _ = model(x)
        return cip_loss(x, recon, probe)

    return grad_check(loss_fn, dec_params, eps=eps, max_coords_per_param=8, seed=7)


def straight_through_flow() -> bool:
    """Encoder parameters receive nonzero gradient through the copy."""
    model, x = _tiny_vq()
    recon, _, terms = model(x)
    loss = (recon - x).abs().mean()
    loss.backward()
    return any(
        p.grad is not None and float(p.grad.abs().sum()) > 0 for p in model.enc.parameters()
    )


def run_gradient_suite() -> dict[str, GradCheckResult | bool]:
    return {
        "transformer_cross_entropy": check_transformer_ce(),
        "vq_commitment_encoder": check_commitment_encoder(),
        "vq_codebook": check_codebook_loss(),
        "recon_l1_decoder": check_recon_decoder(),
        "cip_decoder": check_cip_decoder(),
        "straight_through_flow": straight_through_flow(),
    }
