import numpy as np
import pytest
import torch

from mmvq.config import RunConfig
from mmvq.synthcorpus.corpus import build_corpus
import mmvq.pipeline as P


@pytest.fixture(scope="session")
def small_corpus():
    """Big enough for the probe's frontal-train minimum, cheap to build."""
    return build_corpus(780, 0.2, seed=11)


@pytest.fixture(scope="session")
def tiny_lm_and_vocab():
    """Expanded float64 model over the real grammar vocabulary."""
    cfg = RunConfig()
    vocab = P.build_vocab()
    from mmvq.lmcore.model import LmConfig, build_lm, expand_vocab

    lm_cfg = LmConfig(k_text=vocab.k_text, d_e=32, n_layers=2, n_heads=2,
                      context_length=320, dtype="float64")
    model = build_lm(lm_cfg, seed=21)
    model = expand_vocab(model, 16, seed=22)
    return model, vocab.with_images(16)


@pytest.fixture(scope="session")
def mini_pipeline(tmp_path_factory):
    """A very small but complete pipeline run shared by integration tests."""
    cfg = RunConfig()
    cfg.set("corpus.n_records", 700)
    cfg.set("probe.epochs", 10)
    cfg.set("vq.epochs", 3)
    cfg.set("train.stage1_steps", 30)
    cfg.set("train.stage2_steps", 15)
    cfg.set("train.warmup_steps", 5)
    cfg.set("train.eval_interval", 0)
    cfg.set("eval.max_studies", 40)
    work = tmp_path_factory.mktemp("mini_pipeline")
    result = P.run_full_pipeline(cfg, work_dir=work)
    return cfg, work, result
