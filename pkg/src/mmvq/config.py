"""Line-oriented key=value run configuration.

Every key mirrors a documented config field of some module; unknown keys
are usage errors. Precedence: defaults < preset < config file < explicit
overrides. The fully resolved config is echoed into every output directory
as ``resolved.cfg``. The environment variable ``MMVQ_SEED`` supplies the
default seed.
"""

from __future__ import annotations

import os
from pathlib import Path


class UsageError(Exception):
    """Bad invocation or configuration; the CLI exits with code 2."""


def _default_seed() -> int:
    return int(os.environ.get("MMVQ_SEED", "0"))


DEFAULTS: dict[str, object] = {
    "seed": _default_seed(),
    "corpus.n_records": 4000,
    "corpus.test_fraction": 0.2,
    "corpus.image_size": 32,
    "probe.d_f": 64,
    "probe.lr": 1e-3,
    "probe.batch_size": 64,
    "probe.epochs": 32,
    "vq.k_img": 128,
    "vq.n_z": 32,
    "vq.beta": 0.25,
    "vq.lr": 1e-3,
    "vq.batch_size": 32,
    "vq.epochs": 12,
    "vq.cip_weight": 100.0,
    "vq.cip_enabled": True,
    "vq.reinit_dead": True,
    "vq.usage_entropy_floor": 0.25,
    "lm.d_e": 128,
    "lm.layers": 4,
    "lm.heads": 4,
    "lm.context_length": 320,
    "train.lr": 3e-4,
    "train.batch_size": 16,
    "train.weight_decay": 0.01,
    "train.grad_clip": 1.0,
    "train.objective": "instruct",
    "train.include_vqa": True,
    "train.run_stage1": True,
    "train.stage1_steps": 1200,
    "train.stage2_steps": 500,
    "train.warmup_steps": 50,
    "train.eval_interval": 100,
    "train.ckpt_interval": 0,
    "sample.max_new_tokens": 64,
    "eval.max_studies": 200,
    "eval.vqa_per_study": 3,
}

# paper-reported hyperparameters kept as a named preset (not runnable at
# desk scale without the license-gated data and a pretrained base model)
PRESETS: dict[str, dict[str, object]] = {
    "desk": {},
    "paper": {
        "vq.k_img": 1024,
        "vq.n_z": 256,
        "vq.lr": 4.5e-6,
        "vq.batch_size": 2,
        "train.lr": 5e-6,
        "train.batch_size": 16,
    },
}


def _parse_value(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise UsageError(f"config key {key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise UsageError(f"config key {key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise UsageError(f"config key {key}: expected a number, got {raw!r}") from exc
    return raw.strip()


class RunConfig:
    def __init__(self, values: dict[str, object] | None = None):
        self.values = dict(DEFAULTS)
        if values:
            for k, v in values.items():
                self.set(k, v)

    def set(self, key: str, value: object) -> None:
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, value) if isinstance(value, str) else value

    def __getitem__(self, key: str) -> object:
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def apply_preset(self, name: str) -> None:
        if name not in PRESETS:
            raise UsageError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        for k, v in PRESETS[name].items():
            self.set(k, v)

    def load_file(self, path: str | Path) -> None:
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = stripped.partition("=")
            self.set(key.strip(), raw.strip())

    def apply_overrides(self, pairs: list[str]) -> None:
        for pair in pairs:
            if "=" not in pair:
                raise UsageError(f"override must be key=value, got {pair!r}")
            key, _, raw = pair.partition("=")
            self.set(key.strip(), raw.strip())

    def resolved_text(self) -> str:
        lines = [f"{k} = {self.values[k]}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "resolved.cfg").write_text(self.resolved_text())

    def copy(self) -> "RunConfig":
        out = RunConfig()
        out.values = dict(self.values)
        return out
