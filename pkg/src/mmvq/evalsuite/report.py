"""Full evaluation: generation in all three directions plus the metric stack.

CXR-to-report metrics (AUROC/F1 over extracted labels, Jaccard, BLEU,
ROUGE-L), report-to-CXR metrics (probe AUROC/F1 on generated images, FID on
probe features), the VQA rubric, and the shuffled / majority baselines the
end-to-end gates compare against. Inference fixes instruction variant 0 and
greedy decoding for reproducibility.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..instructset.build import PromptRecord, prompt_ids
from ..instructset.template import instruction_variant
from ..lmcore.sample import SamplerConfig, sample_batch
from ..lmcore.vocab import Vocab, image_tokens_from_ids, tokenize
from ..numcore import np_rng
from ..synthcorpus.findings import KINDS, StudyRecord
from ..vqtok.model import ImageTokens, VqModel, decode_batch, encode_batch
from ..vqtok.probe import ProbeModel, probe_features, probe_logits
from .classify import AggregateResult, auroc_by_kind, f1, f1_by_kind, jaccard, label_matrix
from .fid import fid
from .labeler import LabelVector, extract_labels
from .nlg import bleu, rouge_l
from .vqa_score import vqa_accuracy, vqa_score

GEN_BATCH = 64


@dataclass
class MetricsReport:
    auroc: dict  # CXR-to-report label AUROC
    f1: dict
    jaccard: dict
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    fid: float
    gen_auroc: dict  # report-to-CXR probe AUROC on generated images
    gen_f1: dict
    vqa_accuracy: dict

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "f1": self.f1,
            "jaccard": self.jaccard,
            "bleu1": self.bleu1,
            "bleu2": self.bleu2,
            "bleu3": self.bleu3,
            "bleu4": self.bleu4,
            "rouge_l": self.rouge_l,
            "fid": self.fid,
            "gen_auroc": self.gen_auroc,
            "gen_f1": self.gen_f1,
            "vqa_accuracy": self.vqa_accuracy,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def write_csv(self, path: str | Path) -> None:
        rows = []

        def _flat(prefix: str, obj) -> None:
            if isinstance(obj, dict):
                for k, v in sorted(obj.items()):
                    _flat(f"{prefix}.{k}", v)
            elif isinstance(obj, list):
                rows.append((prefix, ";".join(str(v) for v in obj)))
            else:
                rows.append((prefix, obj))

        _flat("metrics", self.to_dict())
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerows(rows)


@dataclass
class EvalOutputs:
    report: MetricsReport
    c2r_micro_f1: float
    c2r_shuffled_micro_f1: float
    r2c_macro_auroc: float
    r2c_shuffled_macro_auroc: float
    vqa_mean: float
    vqa_majority_baseline: float
    recon_auroc_ratio: dict[str, float]
    probe_auroc: dict[str, float]  # per-kind, on the original eval images
    recon_feature_l2: float  # mean probe-feature distance x vs decode(encode(x))
    token_idempotence: float
    generated_reports: list[str] = field(default_factory=list)
    generated_images: np.ndarray | None = None


def _chunks(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def generate_reports(model, vocab: Vocab, records, tokens: dict[str, np.ndarray], seed: int = 0) -> list[str]:
    """Greedy CXR-to-report generation with instruction variant 0."""
    instruction = instruction_variant("CXR_TO_REPORT", 0)
    cfg = SamplerConfig(mode="greedy", max_new_tokens=64)
    out: list[str] = []
    for chunk in _chunks(records, GEN_BATCH):
        prompts = [
            prompt_ids(
                PromptRecord("CXR_TO_REPORT", instruction, ImageTokens(tokens[r.study_id]), "x"),
                vocab,
            )
            for r in chunk
        ]
        for ids in sample_batch(model, vocab, prompts, cfg, seed=seed):
            out.append(vocab.decode([i for i in ids if i < vocab.k_text]))
    return out


def generate_images(model, vocab: Vocab, vq: VqModel, reports: list[str], seed: int = 0) -> np.ndarray:
    """Greedy, image-constrained report-to-CXR generation."""
    instruction = instruction_variant("REPORT_TO_CXR", 0)
    d_z = vq.config.d_z
    cfg = SamplerConfig(mode="greedy", image_constrained=True, d_z=d_z)
    grids = []
    for chunk in _chunks(reports, GEN_BATCH):
        prompts = [
            prompt_ids(
                PromptRecord("REPORT_TO_CXR", instruction, rep, ImageTokens(np.zeros(d_z))),
                vocab,
            )
            for rep in chunk
        ]
        for ids in sample_batch(model, vocab, prompts, cfg, seed=seed):
            grids.append(image_tokens_from_ids(ids, vocab))
    return decode_batch(np.array(grids, dtype=np.int64), vq)


def _stratified_questions(record, per_study: int):
    """Pick questions covering all families first, then the remainder."""
    by_family: dict[str, list] = {}
    for qa in record.vqa:
        by_family.setdefault(qa.facts.family, []).append(qa)
    picked = [qas[0] for _, qas in sorted(by_family.items())]
    rest = [qa for qa in record.vqa if qa not in picked]
    return (picked + rest)[:per_study]


def generate_vqa_answers(
    model, vocab: Vocab, records, tokens: dict[str, np.ndarray], per_study: int = 3, seed: int = 0
) -> list[tuple[str, object]]:
    """(predicted answer, AnswerFacts) pairs for sampled eval questions."""
    cfg = SamplerConfig(mode="greedy", max_new_tokens=32)
    questions = []
    for r in records:
        for qa in _stratified_questions(r, per_study):
            questions.append((r, qa))
    out = []
    for chunk in _chunks(questions, GEN_BATCH):
        prompts = [
            prompt_ids(
                PromptRecord("CXR_VQA", qa.question, ImageTokens(tokens[r.study_id]), "x"),
                vocab,
            )
            for r, qa in chunk
        ]
        for (r, qa), ids in zip(chunk, sample_batch(model, vocab, prompts, cfg, seed=seed)):
            out.append((vocab.decode([i for i in ids if i < vocab.k_text]), qa.facts))
    return out


def gen_image_metrics(
    generated: np.ndarray, findings_list: list, probe: ProbeModel
) -> tuple[AggregateResult, AggregateResult]:
    """Probe AUROC (from logits) and F1 (0.5-sigmoid threshold) per kind."""
    logits = probe_logits(probe, generated)
    truth_vecs = [LabelVector.from_findings(f) for f in findings_list]
    truth = label_matrix(truth_vecs)
    scores = {k: logits[:, KINDS.index(k)] for k in KINDS}
    preds = {k: (1.0 / (1.0 + np.exp(-scores[k])) > 0.5).astype(int) for k in KINDS}
    return auroc_by_kind(scores, truth), f1_by_kind(preds, truth)


def _label_metrics(pred_vecs, true_vecs):
    pred = label_matrix(pred_vecs)
    true = label_matrix(true_vecs)
    return auroc_by_kind(pred, true), f1_by_kind(pred, true), jaccard(pred_vecs, true_vecs)


def _micro_f1(pred_vecs, true_vecs) -> float:
    pred = label_matrix(pred_vecs)
    true = label_matrix(true_vecs)
    all_pred = np.concatenate([pred[k] for k in KINDS])
    all_true = np.concatenate([true[k] for k in KINDS])
    return f1(all_pred, all_true)


def _derangement(n: int, rng) -> np.ndarray:
    """A permutation with no fixed points (retry sampling, seeded)."""
    while True:
        perm = rng.permutation(n)
        if n == 1 or not np.any(perm == np.arange(n)):
            return perm


def token_idempotence(vq: VqModel, images: np.ndarray, limit: int = 100) -> float:
    """Fraction of token positions with encode(decode(encode(x))) == encode(x)."""
    sample = images[:limit]
    first = encode_batch(sample, vq)
    second = encode_batch(decode_batch(first, vq), vq)
    return float((first == second).mean())


def evaluate_full(
    model,
    vocab: Vocab,
    vq: VqModel,
    probe: ProbeModel,
    records: list[StudyRecord],
    train_records: list[StudyRecord] | None = None,
    vqa_per_study: int = 3,
    seed: int = 0,
) -> EvalOutputs:
    if not records:
        raise ValueError("no evaluation records")
    images = np.stack([r.image for r in records])
    tokens_arr = encode_batch(images, vq)
    tokens = {r.study_id: tokens_arr[i] for i, r in enumerate(records)}
    findings_list = [r.findings for r in records]
    true_vecs = [LabelVector.from_findings(f) for f in findings_list]
    rng = np_rng(seed, "eval_shuffle")

    # --- CXR -> report ---
    gen_reports = generate_reports(model, vocab, records, tokens, seed=seed)
    pred_vecs = [extract_labels(t) for t in gen_reports]
    auroc_res, f1_res, jac_res = _label_metrics(pred_vecs, true_vecs)
    c2r_micro_f1 = _micro_f1(pred_vecs, true_vecs)
    perm = _derangement(len(records), rng)
    shuffled_micro_f1 = _micro_f1([pred_vecs[i] for i in perm], true_vecs)

    bleu_totals = np.zeros(4)
    rouge_total = 0.0
    for text, rec in zip(gen_reports, records):
        cand = tokenize(text)
        refs = [tokenize(rec.report_concise), tokenize(rec.report_verbose)]
        b = bleu(cand, refs)
        bleu_totals += [b[1], b[2], b[3], b[4]]
        rouge_total += rouge_l(cand, tokenize(rec.report_concise))
    bleu_means = bleu_totals / len(records)
    rouge_mean = rouge_total / len(records)

    # --- report -> CXR ---
    gen_imgs = generate_images(model, vocab, vq, [r.report_concise for r in records], seed=seed)
    gen_auroc_res, gen_f1_res = gen_image_metrics(gen_imgs, findings_list, probe)
    perm2 = _derangement(len(records), rng)
    shuf_auroc_res, _ = gen_image_metrics(gen_imgs, [findings_list[i] for i in perm2], probe)
    fid_value = fid(probe_features(probe, gen_imgs), probe_features(probe, images))

    # --- VQA ---
    answers = generate_vqa_answers(model, vocab, records, tokens, per_study=vqa_per_study, seed=seed)
    graded = [(vqa_score(pred, facts), facts.family) for pred, facts in answers]
    vqa_acc = vqa_accuracy(graded)
    majority_pool = train_records if train_records is not None else records
    counts: dict[str, int] = {}
    for r in majority_pool:
        for qa in r.vqa:
            counts[qa.answer] = counts.get(qa.answer, 0) + 1
    majority_answer = max(sorted(counts), key=lambda a: counts[a])
    majority_graded = [(vqa_score(majority_answer, facts), facts.family) for _, facts in answers]
    majority_mean = vqa_accuracy(majority_graded)["all"]

    # --- tokenizer retention ---
    recon = decode_batch(tokens_arr, vq)
    truth_matrix = label_matrix(true_vecs)
    orig_logits = probe_logits(probe, images)
    recon_logits = probe_logits(probe, recon)
    ratio = {}
    probe_auroc = {}
    for k in KINDS:
        col = KINDS.index(k)
        a_orig = auroc_by_kind({k: orig_logits[:, col]}, {k: truth_matrix[k]}).per_kind[k]
        a_recon = auroc_by_kind({k: recon_logits[:, col]}, {k: truth_matrix[k]}).per_kind[k]
        if a_orig is None or a_recon is None:
            continue
        probe_auroc[k] = a_orig
        ratio[k] = a_recon / a_orig if a_orig > 0 else 1.0
    feat_l2 = float(
        ((probe_features(probe, images) - probe_features(probe, recon)) ** 2).sum(axis=1).mean()
    )

    report = MetricsReport(
        auroc=auroc_res.to_dict(),
        f1=f1_res.to_dict(),
        jaccard=jac_res.to_dict(),
        bleu1=float(bleu_means[0]),
        bleu2=float(bleu_means[1]),
        bleu3=float(bleu_means[2]),
        bleu4=float(bleu_means[3]),
        rouge_l=float(rouge_mean),
        fid=float(fid_value),
        gen_auroc=gen_auroc_res.to_dict(),
        gen_f1=gen_f1_res.to_dict(),
        vqa_accuracy=vqa_acc,
    )
    return EvalOutputs(
        report=report,
        c2r_micro_f1=c2r_micro_f1,
        c2r_shuffled_micro_f1=shuffled_micro_f1,
        r2c_macro_auroc=gen_auroc_res.macro if gen_auroc_res.macro is not None else 0.0,
        r2c_shuffled_macro_auroc=shuf_auroc_res.macro if shuf_auroc_res.macro is not None else 0.0,
        vqa_mean=vqa_acc["all"] or 0.0,
        vqa_majority_baseline=majority_mean or 0.0,
        recon_auroc_ratio=ratio,
        probe_auroc=probe_auroc,
        recon_feature_l2=feat_l2,
        token_idempotence=token_idempotence(vq, images),
        generated_reports=gen_reports,
        generated_images=gen_imgs,
    )
