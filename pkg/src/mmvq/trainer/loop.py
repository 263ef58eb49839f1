"""Fine-tuning loop over the mixed instruction stream.

Deterministic given (initial model, stream seed, config): AdamW on the
configured objective with global-norm clipping, per-task loss logging, and
resumable train-state checkpoints carrying the optimizer moments and the
stream's RNG cursor.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..instructset.build import TokenizedExample, batch_nll, build_example
from ..instructset.mixing import MixStream
from ..lmcore.model import LmConfig, TransformerLM
from ..lmcore.vocab import Vocab
from ..numcore import AdamWHyper, AdamWState, adamw_step, clip_global_norm, init_adamw
from .checkpoint import MAGIC_TRAIN, load_container, save_container


@dataclass
class TrainConfig:
    stage: int = 1
    lr: float = 3e-4  # desk default; the paper preset uses 5e-6
    batch_size: int = 16
    steps: int = 500
    objective: str = "instruct"  # instruct | joint
    include_vqa: bool = True
    ran_stage1: bool = True  # recorded in checkpoint metadata
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    warmup_steps: int = 0  # NL_IF-only stream prefix, in steps
    eval_interval: int = 0
    ckpt_interval: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.objective not in ("instruct", "joint"):
            raise ValueError(f"unknown objective {self.objective!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)
    val_rows: list[dict] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "task", "loss_mean", "loss_sum", "tokens"])
            writer.writeheader()
            writer.writerows(self.rows)

    def write_val_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "task", "loss_mean"])
            writer.writeheader()
            writer.writerows(self.val_rows)


def _log_step(log: TrainLog, step: int, tasks: list[str], sums: torch.Tensor, counts: torch.Tensor) -> None:
    by_task: dict[str, tuple[float, int]] = {}
    for task, s, c in zip(tasks, sums.tolist(), counts.tolist()):
        acc = by_task.get(task, (0.0, 0))
        by_task[task] = (acc[0] + s, acc[1] + int(c))
    total_s = float(sums.sum().item())
    total_c = int(counts.sum().item())
    for task in sorted(by_task):
        s, c = by_task[task]
        log.rows.append(
            {"step": step, "task": task, "loss_mean": s / c if c else 0.0, "loss_sum": s, "tokens": c}
        )
    log.rows.append(
        {
            "step": step,
            "task": "all",
            "loss_mean": total_s / total_c if total_c else 0.0,
            "loss_sum": total_s,
            "tokens": total_c,
        }
    )


def train_stage(
    model: TransformerLM,
    stream: MixStream,
    vocab: Vocab,
    config: TrainConfig,
    out_dir: str | Path | None = None,
    val_sets: dict[str, list[TokenizedExample]] | None = None,
    opt_state: AdamWState | None = None,
    start_step: int = 0,
) -> TrainLog:
    params = model.params_dict()
    if opt_state is None:
        opt_state = init_adamw(params, AdamWHyper(lr=config.lr, weight_decay=config.weight_decay))
    log = TrainLog()
    ctx = model.config.context_length
    warmup_draws = config.warmup_steps * config.batch_size
    if stream.warmup_draws != warmup_draws:
        stream.warmup_draws = warmup_draws

    for step in range(start_step + 1, config.steps + 1):
        records = [next(stream) for _ in range(config.batch_size)]
        examples = [build_example(r, vocab, ctx) for r in records]
        sums, counts = batch_nll(model, examples, vocab, config.objective)
        total = sums.sum()
        count = counts.sum()
        loss = total / count.to(total.dtype)
        if not torch.isfinite(loss):
            studies = sorted({e.study_id for e in examples if e.study_id})
            raise RuntimeError(f"non-finite loss at step {step}; batch studies {studies}")
        for p in params.values():
            p.grad = None
        loss.backward()
        clip_global_norm(params.values(), config.grad_clip)
        adamw_step(params, opt_state)

        _log_step(log, step, [e.task for e in examples], sums.detach(), counts)

        if val_sets and config.eval_interval and step % config.eval_interval == 0:
            _validate(model, vocab, val_sets, step, log)
        if out_dir and config.ckpt_interval and step % config.ckpt_interval == 0:
            save_train_state(
                Path(out_dir) / f"train_state_{step:06d}.ckpt",
                model, vocab, opt_state, config, stream.state(), step,
            )
    if val_sets and config.eval_interval:
        _validate(model, vocab, val_sets, config.steps, log)
    return log


@torch.no_grad()
def _validate(model, vocab, val_sets, step: int, log: TrainLog) -> None:
    for task in sorted(val_sets):
        examples = val_sets[task]
        if not examples:
            continue
        sums, counts = batch_nll(model, examples, vocab, "instruct")
        total, count = float(sums.sum().item()), int(counts.sum().item())
        log.val_rows.append(
            {"step": step, "task": task, "loss_mean": total / count if count else 0.0}
        )


# ---------------------------------------------------------------------------
# Resumable train state
# ---------------------------------------------------------------------------


def save_train_state(
    path: str | Path,
    model: TransformerLM,
    vocab: Vocab,
    opt_state: AdamWState,
    config: TrainConfig,
    stream_state: dict,
    next_start_step: int,
) -> None:
    arrays: list[tuple[str, np.ndarray]] = [
        ("param/" + k, t.detach().cpu().numpy()) for k, t in model.state_dict().items()
    ]
    arrays += [("adam_m/" + k, t.cpu().numpy()) for k, t in opt_state.m.items()]
    arrays += [("adam_v/" + k, t.cpu().numpy()) for k, t in opt_state.v.items()]
    container_config = {
        "lm": model.config.to_dict(),
        "vocab": {"text_tokens": vocab.text_tokens, "k_img": vocab.k_img},
        "expansion_record": model.expansion_record,
        "train": config.to_dict(),
    }
    meta = {
        "adam_step": opt_state.step,
        "stream_state": stream_state,
        "next_start_step": next_start_step,
    }
    save_container(path, MAGIC_TRAIN, container_config, meta, arrays)


def load_train_state(path: str | Path):
    from ..lmcore.vocab import Vocab

    config, meta, arrays = load_container(path, MAGIC_TRAIN)
    model = TransformerLM(LmConfig(**config["lm"]))
    state = {k[len("param/"):]: torch.from_numpy(v.copy()) for k, v in arrays.items() if k.startswith("param/")}
    model.load_state_dict(state)
    model.expansion_record = config["expansion_record"]
    vocab = Vocab(config["vocab"]["text_tokens"], config["vocab"]["k_img"])
    train_config = TrainConfig(**config["train"])
    opt_state = init_adamw(model.params_dict(), AdamWHyper(lr=train_config.lr, weight_decay=train_config.weight_decay))
    with torch.no_grad():
        for k in opt_state.m:
            opt_state.m[k].copy_(torch.from_numpy(arrays["adam_m/" + k].copy()))
            opt_state.v[k].copy_(torch.from_numpy(arrays["adam_v/" + k].copy()))
    opt_state.step = int(meta["adam_step"])
    return model, vocab, opt_state, train_config, meta["stream_state"], int(meta["next_start_step"])
