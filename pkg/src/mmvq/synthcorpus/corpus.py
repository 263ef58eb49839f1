"""Corpus assembly and on-disk formats.

Disk layout: ``manifest.jsonl`` (first line a meta header with the grammar
version and generator seed, then one record per line) plus one raw image
file per record at ``images/<study_id>.f32``. The image format is a 12-byte
little-endian header (magic ``PXR1``, u16 height, u16 width, u32 reserved)
followed by row-major float32 pixels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numcore import derive_seed, np_rng
from .findings import Finding, LATERAL_PRIOR, StudyRecord, sample_findings
from .grammar import GRAMMAR_VERSION, render_report
from .render import render_image
from .vqa import VqaItem, gen_vqa

F32_MAGIC = b"PXR1"
F32_HEADER = struct.Struct("<4sHHI")  # magic, height, width, reserved (12 bytes)


def write_f32(path: Path, image: np.ndarray) -> None:
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(F32_HEADER.pack(F32_MAGIC, h, w, 0))
        fh.write(np.ascontiguousarray(image, dtype="<f4").tobytes())


def write_pgm(path: Path, image: np.ndarray) -> None:
    """8-bit binary PGM preview of a [0, 1] float image."""
    h, w = image.shape
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def read_f32(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < F32_HEADER.size:
        raise ValueError(f"{path}: truncated image file")
    magic, h, w, _ = F32_HEADER.unpack_from(raw)
    if magic != F32_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = raw[F32_HEADER.size:]
    if len(body) != 4 * h * w:
        raise ValueError(f"{path}: expected {4 * h * w} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).copy()


@dataclass
class CorpusManifest:
    records: list[StudyRecord]
    generator_seed: int
    grammar_version: str = GRAMMAR_VERSION
    test_fraction: float = 0.2
    image_size: int = 32
    root: Path | None = None

    def split(self, name: str) -> list[StudyRecord]:
        return [r for r in self.records if r.split == name]

    def by_id(self) -> dict[str, StudyRecord]:
        return {r.study_id: r for r in self.records}


def _record_to_json(rec: StudyRecord) -> dict:
    return {
        "study_id": rec.study_id,
        "findings": [f.to_dict() for f in rec.findings],
        "report_verbose": rec.report_verbose,
        "report_concise": rec.report_concise,
        "vqa": [q.to_dict() for q in rec.vqa],
        "view": rec.view,
        "split": rec.split,
    }


def _record_from_json(d: dict) -> StudyRecord:
    return StudyRecord(
        study_id=d["study_id"],
        findings=[Finding.from_dict(f) for f in d["findings"]],
        report_verbose=d["report_verbose"],
        report_concise=d["report_concise"],
        vqa=[VqaItem.from_dict(q) for q in d["vqa"]],
        view=d["view"],
        split=d["split"],
    )


def make_record(study_id: str, base_seed: int, image_size: int = 32) -> StudyRecord:
    """One study, fully derived from (base_seed, study_id)."""
    rng = np_rng(base_seed, "record", study_id)
    findings = sample_findings(rng)
    view = "lateral" if rng.random() < LATERAL_PRIOR else "frontal"
    img_seed = derive_seed(base_seed, "img", study_id)
    image = render_image(findings, img_seed, size=image_size)
    if view == "lateral":
        image = np.ascontiguousarray(np.rot90(image))
    rep_seed = derive_seed(base_seed, "rep", study_id)
    return StudyRecord(
        study_id=study_id,
        findings=findings,
        image=image,
        report_verbose=render_report(findings, "verbose", rep_seed),
        report_concise=render_report(findings, "concise", rep_seed),
        vqa=gen_vqa(findings, derive_seed(base_seed, "vqa", study_id)),
        view=view,
    )


def build_corpus(
    n_records: int,
    test_fraction: float,
    seed: int,
    out_dir: str | Path | None = None,
    image_size: int = 32,
) -> CorpusManifest:
    """Generate the corpus; persist it when ``out_dir`` is given."""
    if n_records < 10:
        raise ValueError(f"n_records must be >= 10, got {n_records}")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")

    records = [make_record(f"s{i:06d}", seed, image_size) for i in range(n_records)]
    n_test = round(n_records * test_fraction)
    test_idx = set(
        int(i) for i in np_rng(seed, "split").choice(n_records, size=n_test, replace=False)
    )
    for i, rec in enumerate(records):
        rec.split = "test" if i in test_idx else "train"

    manifest = CorpusManifest(
        records=records,
        generator_seed=seed,
        test_fraction=test_fraction,
        image_size=image_size,
    )
    if out_dir is not None:
        save_corpus(manifest, Path(out_dir))
    return manifest


def save_corpus(manifest: CorpusManifest, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out_dir}: {exc}") from exc
    meta = {
        "type": "meta",
        "grammar_version": manifest.grammar_version,
        "generator_seed": manifest.generator_seed,
        "n_records": len(manifest.records),
        "test_fraction": manifest.test_fraction,
        "image_size": manifest.image_size,
    }
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for rec in manifest.records:
            fh.write(json.dumps(_record_to_json(rec), sort_keys=True) + "\n")
    for rec in manifest.records:
        write_f32(out_dir / "images" / f"{rec.study_id}.f32", rec.image)
    manifest.root = out_dir


def load_corpus(root: str | Path, load_images: bool = True) -> CorpusManifest:
    root = Path(root)
    path = root / "manifest.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no corpus manifest at {path}")
    with open(path, encoding="utf-8") as fh:
        meta = json.loads(fh.readline())
        if meta.get("type") != "meta":
            raise ValueError(f"{path}: first line is not a meta header")
        records = [_record_from_json(json.loads(line)) for line in fh if line.strip()]
    if load_images:
        for rec in records:
            rec.image = read_f32(root / "images" / f"{rec.study_id}.f32")
    return CorpusManifest(
        records=records,
        generator_seed=meta["generator_seed"],
        grammar_version=meta["grammar_version"],
        test_fraction=meta["test_fraction"],
        image_size=meta["image_size"],
        root=root,
    )
