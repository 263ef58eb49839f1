"""Versioned binary checkpoint container.

Layout: 4-byte magic, u32 header length, canonical-JSON header, raw
little-endian payload of concatenated arrays. The header records the
config/meta blocks, every array's name/dtype/shape/offset, and the SHA-256
of the payload. Bad magic, short files, and digest mismatches raise
distinct error types; saving then loading then saving again is
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC_LM = b"LMC1"
MAGIC_VQ = b"VQT1"
MAGIC_PROBE = b"PRB1"
MAGIC_TRAIN = b"TRS1"

_LEN = struct.Struct("<I")


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointHashError(CheckpointError):
    pass


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def save_container(
    path: str | Path,
    magic: bytes,
    config: dict,
    meta: dict,
    arrays: list[tuple[str, np.ndarray]],
) -> None:
    payload = b"".join(np.ascontiguousarray(a).tobytes() for _, a in arrays)
    entries = []
    offset = 0
    for name, a in arrays:
        a = np.ascontiguousarray(a)
        entries.append(
            {
                "name": name,
                "dtype": a.dtype.str,
                "shape": list(a.shape),
                "offset": offset,
                "nbytes": a.nbytes,
            }
        )
        offset += a.nbytes
    header = _canonical_json(
        {
            "config": config,
            "meta": meta,
            "arrays": entries,
            "payload_sha256": hashlib.sha256(payload).hexdigest(),
        }
    )
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(_LEN.pack(len(header)))
        fh.write(header)
        fh.write(payload)


def load_container(path: str | Path, magic: bytes) -> tuple[dict, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise CheckpointTruncatedError(f"{path}: file shorter than its fixed header")
    if raw[:4] != magic:
        raise CheckpointVersionError(
            f"{path}: magic {raw[:4]!r} does not match expected {magic!r}"
        )
    (header_len,) = _LEN.unpack_from(raw, 4)
    if len(raw) < 8 + header_len:
        raise CheckpointTruncatedError(f"{path}: truncated header")
    header = json.loads(raw[8 : 8 + header_len])
    payload = raw[8 + header_len :]
    expected = sum(e["nbytes"] for e in header["arrays"])
    if len(payload) < expected:
        raise CheckpointTruncatedError(
            f"{path}: payload has {len(payload)} bytes, header expects {expected}"
        )
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise CheckpointHashError(f"{path}: payload hash mismatch")
    arrays = {}
    for e in header["arrays"]:
        buf = payload[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header["config"], header["meta"], arrays


# ---------------------------------------------------------------------------
# Model-specific wrappers
# ---------------------------------------------------------------------------


def _state_arrays(module: torch.nn.Module) -> list[tuple[str, np.ndarray]]:
    return [(name, t.detach().cpu().numpy()) for name, t in module.state_dict().items()]


def _load_state(module: torch.nn.Module, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
    state = {}
    for name, _ in module.state_dict().items():
        key = prefix + name
        if key not in arrays:
            raise CheckpointError(f"missing array {key!r} in checkpoint")
        state[name] = torch.from_numpy(arrays[key].copy())
    module.load_state_dict(state)


def save_lm(path, model, vocab, meta: dict | None = None) -> None:
    from ..lmcore.model import TransformerLM  # noqa: F401  (type context)

    config = {
        "lm": model.config.to_dict(),
        "vocab": {"text_tokens": vocab.text_tokens, "k_img": vocab.k_img},
        "expansion_record": model.expansion_record,
    }
    save_container(path, MAGIC_LM, config, meta or {}, _state_arrays(model))


def load_lm(path):
    from ..lmcore.model import LmConfig, TransformerLM
    from ..lmcore.vocab import Vocab

    config, meta, arrays = load_container(path, MAGIC_LM)
    model = TransformerLM(LmConfig(**config["lm"]))
    _load_state(model, arrays)
    model.expansion_record = config["expansion_record"]
    vocab = Vocab(config["vocab"]["text_tokens"], config["vocab"]["k_img"])
    return model, vocab, meta


def save_vq(path, model, probe_hash: str, seed: int, meta: dict | None = None) -> None:
    config = {"vq": model.config.to_dict(), "probe_hash": probe_hash, "train_seed": seed}
    save_container(path, MAGIC_VQ, config, meta or {}, _state_arrays(model))


def load_vq(path):
    from ..vqtok.model import VqConfig, VqModel

    config, meta, arrays = load_container(path, MAGIC_VQ)
    model = VqModel(VqConfig.from_dict(config["vq"]))
    _load_state(model, arrays)
    meta = dict(meta)
    meta["probe_hash"] = config["probe_hash"]
    meta["train_seed"] = config["train_seed"]
    return model, meta


def save_probe(path, probe, meta: dict | None = None) -> None:
    config = {"probe": probe.config.to_dict(), "param_hash": probe.param_hash()}
    save_container(path, MAGIC_PROBE, config, meta or {}, _state_arrays(probe))


def load_probe(path):
    from ..vqtok.probe import ProbeConfig, ProbeModel

    config, meta, arrays = load_container(path, MAGIC_PROBE)
    probe = ProbeModel(ProbeConfig.from_dict(config["probe"]))
    _load_state(probe, arrays)
    if probe.param_hash() != config["param_hash"]:
        raise CheckpointHashError(f"{path}: probe parameter hash mismatch")
    return probe.freeze(), meta
