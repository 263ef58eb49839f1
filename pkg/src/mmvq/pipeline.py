"""End-to-end orchestration: corpus -> probe -> tokenizer -> LM -> metrics.

Used by the CLI commands, the ablation matrix, and the acceptance suite.
Every stage derives its RNG stream from the run seed plus a stage name, so
a whole pipeline is a deterministic function of (config, seed).
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .evalsuite.report import EvalOutputs, evaluate_full
from .instructset.build import PromptRecord, TokenizedExample, build_example
from .instructset.mixing import MixSchedule, MixStream, build_pools
from .instructset.nlif import NLIF_ITEMS, nlif_texts
from .instructset.template import template_texts
from .lmcore.model import LmConfig, TransformerLM, build_lm, expand_vocab
from .lmcore.vocab import Vocab, build_text_vocab
from .numcore import derive_seed
from .synthcorpus.corpus import CorpusManifest, build_corpus, load_corpus
from .synthcorpus.grammar import all_report_texts
from .synthcorpus.vqa import all_vqa_texts
from .trainer.checkpoint import save_lm, save_probe, save_vq
from .trainer.loop import TrainConfig, TrainLog, train_stage
from .vqtok.model import ImageTokens, VqConfig, VqModel, encode_batch
from .vqtok.probe import ProbeConfig, ProbeModel, train_probe
from .vqtok.train import VqTrainConfig, train_vq

log = logging.getLogger(__name__)


def grammar_texts() -> list[str]:
    return all_report_texts() + all_vqa_texts() + template_texts() + nlif_texts()


def build_vocab() -> Vocab:
    return build_text_vocab(grammar_texts())


def probe_config(cfg: RunConfig) -> ProbeConfig:
    return ProbeConfig(
        d_f=int(cfg["probe.d_f"]),
        image_size=int(cfg["corpus.image_size"]),
        lr=float(cfg["probe.lr"]),
        batch_size=int(cfg["probe.batch_size"]),
        epochs=int(cfg["probe.epochs"]),
    )


def vq_config(cfg: RunConfig) -> VqConfig:
    return VqConfig(
        k_img=int(cfg["vq.k_img"]),
        n_z=int(cfg["vq.n_z"]),
        image_size=int(cfg["corpus.image_size"]),
        beta=float(cfg["vq.beta"]),
    )


def vq_train_config(cfg: RunConfig) -> VqTrainConfig:
    return VqTrainConfig(
        lr=float(cfg["vq.lr"]),
        batch_size=int(cfg["vq.batch_size"]),
        epochs=int(cfg["vq.epochs"]),
        cip_weight=float(cfg["vq.cip_weight"]),
        cip_enabled=bool(cfg["vq.cip_enabled"]),
        usage_entropy_floor=float(cfg["vq.usage_entropy_floor"]),
        reinit_dead=bool(cfg["vq.reinit_dead"]),
        seed=derive_seed(cfg.seed, "vq_train"),
    )


def train_config(cfg: RunConfig, stage: int) -> TrainConfig:
    return TrainConfig(
        stage=stage,
        lr=float(cfg["train.lr"]),
        batch_size=int(cfg["train.batch_size"]),
        steps=int(cfg[f"train.stage{stage}_steps"]),
        objective=str(cfg["train.objective"]),
        include_vqa=bool(cfg["train.include_vqa"]),
        ran_stage1=bool(cfg["train.run_stage1"]),
        weight_decay=float(cfg["train.weight_decay"]),
        grad_clip=float(cfg["train.grad_clip"]),
        warmup_steps=int(cfg["train.warmup_steps"]) if stage == 1 else 0,
        eval_interval=int(cfg["train.eval_interval"]),
        ckpt_interval=int(cfg["train.ckpt_interval"]),
        seed=derive_seed(cfg.seed, "train", stage),
    )


def toggle_meta(cfg: RunConfig) -> dict:
    """Ablation toggles stamped into LM checkpoint metadata."""
    return {
        "objective": str(cfg["train.objective"]),
        "include_vqa": bool(cfg["train.include_vqa"]),
        "ran_stage1": bool(cfg["train.run_stage1"]),
        "cip_used_tokenizer": bool(cfg["vq.cip_enabled"]),
    }


def corpus_step(cfg: RunConfig, out_dir: str | Path | None = None) -> CorpusManifest:
    return build_corpus(
        n_records=int(cfg["corpus.n_records"]),
        test_fraction=float(cfg["corpus.test_fraction"]),
        seed=derive_seed(cfg.seed, "corpus"),
        out_dir=out_dir,
        image_size=int(cfg["corpus.image_size"]),
    )


def probe_step(cfg: RunConfig, corpus: CorpusManifest) -> ProbeModel:
    return train_probe(corpus, probe_config(cfg), seed=derive_seed(cfg.seed, "probe"))


def vq_step(cfg: RunConfig, corpus: CorpusManifest, probe: ProbeModel):
    return train_vq(corpus, probe, vq_train_config(cfg), vq_config(cfg))


def encode_corpus_tokens(vq: VqModel, corpus: CorpusManifest, batch: int = 256) -> dict[str, np.ndarray]:
    tokens: dict[str, np.ndarray] = {}
    records = corpus.records
    for start in range(0, len(records), batch):
        chunk = records[start : start + batch]
        arr = encode_batch(np.stack([r.image for r in chunk]), vq)
        for rec, row in zip(chunk, arr):
            tokens[rec.study_id] = row
    return tokens


def make_val_sets(
    corpus: CorpusManifest,
    vocab: Vocab,
    tokens: dict[str, np.ndarray],
    context_length: int,
    per_task: int = 16,
    seed: int = 0,
) -> dict[str, list[TokenizedExample]]:
    """Small fixed per-task validation sets from frontal test records."""
    from .instructset.template import instruction_variant

    records = [r for r in corpus.split("test") if r.view == "frontal"][:per_task]
    sets: dict[str, list[TokenizedExample]] = {"CXR_TO_REPORT": [], "REPORT_TO_CXR": [], "CXR_VQA": [], "NL_IF": []}
    for rec in records:
        img = ImageTokens(tokens[rec.study_id])
        sets["CXR_TO_REPORT"].append(
            build_example(
                PromptRecord("CXR_TO_REPORT", instruction_variant("CXR_TO_REPORT", 0), img, rec.report_concise, rec.study_id),
                vocab, context_length,
            )
        )
        sets["REPORT_TO_CXR"].append(
            build_example(
                PromptRecord("REPORT_TO_CXR", instruction_variant("REPORT_TO_CXR", 0), rec.report_concise, img, rec.study_id),
                vocab, context_length,
            )
        )
        qa = rec.vqa[0]
        sets["CXR_VQA"].append(
            build_example(PromptRecord("CXR_VQA", qa.question, img, qa.answer, rec.study_id), vocab, context_length)
        )
    for item in NLIF_ITEMS[:per_task]:
        sets["NL_IF"].append(
            build_example(PromptRecord("NL_IF", item.instruction, item.input, item.response), vocab, context_length)
        )
    return sets


def fresh_lm(cfg: RunConfig, vocab: Vocab) -> tuple[TransformerLM, Vocab]:
    """Random-init text model expanded with the image-token rows."""
    lm_cfg = LmConfig(
        k_text=vocab.k_text,
        k_img=0,
        d_e=int(cfg["lm.d_e"]),
        n_layers=int(cfg["lm.layers"]),
        n_heads=int(cfg["lm.heads"]),
        context_length=int(cfg["lm.context_length"]),
    )
    model = build_lm(lm_cfg, seed=derive_seed(cfg.seed, "lm_init"))
    k_img = int(cfg["vq.k_img"])
    model = expand_vocab(model, k_img, seed=derive_seed(cfg.seed, "expand"))
    return model, vocab.with_images(k_img)


def lm_stage_step(
    cfg: RunConfig,
    corpus: CorpusManifest,
    tokens: dict[str, np.ndarray],
    model: TransformerLM,
    vocab: Vocab,
    stage: int,
    out_dir: str | Path | None = None,
    val_sets: dict | None = None,
) -> TrainLog:
    tconf = train_config(cfg, stage)
    pools = build_pools(corpus, tokens, stage)
    schedule = MixSchedule.for_stage(stage, include_vqa=tconf.include_vqa)
    stream = MixStream(pools, schedule, seed=tconf.seed, warmup_draws=tconf.warmup_steps * tconf.batch_size)
    return train_stage(model, stream, vocab, tconf, out_dir=out_dir, val_sets=val_sets)


@dataclass
class PipelineResult:
    corpus: CorpusManifest
    probe: ProbeModel
    vq: VqModel
    model: TransformerLM
    vocab: Vocab
    eval_outputs: EvalOutputs
    stage_logs: dict[int, TrainLog]


def eval_records(cfg: RunConfig, corpus: CorpusManifest):
    records = [r for r in corpus.split("test") if r.view == "frontal"]
    return records[: int(cfg["eval.max_studies"])]


def eval_step(cfg: RunConfig, model, vocab, vq, probe, corpus) -> EvalOutputs:
    return evaluate_full(
        model, vocab, vq, probe,
        eval_records(cfg, corpus),
        train_records=corpus.split("train"),
        vqa_per_study=int(cfg["eval.vqa_per_study"]),
        seed=derive_seed(cfg.seed, "eval"),
    )


def write_eval_outputs(outputs: EvalOutputs, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs.report.write_json(out_dir / "metrics.json")
    outputs.report.write_csv(out_dir / "metrics.csv")
    extras = {
        "c2r_micro_f1": outputs.c2r_micro_f1,
        "c2r_shuffled_micro_f1": outputs.c2r_shuffled_micro_f1,
        "r2c_macro_auroc": outputs.r2c_macro_auroc,
        "r2c_shuffled_macro_auroc": outputs.r2c_shuffled_macro_auroc,
        "vqa_mean": outputs.vqa_mean,
        "vqa_majority_baseline": outputs.vqa_majority_baseline,
        "recon_auroc_ratio": outputs.recon_auroc_ratio,
        "probe_auroc": outputs.probe_auroc,
        "recon_feature_l2": outputs.recon_feature_l2,
        "token_idempotence": outputs.token_idempotence,
    }
    (out_dir / "eval_extras.json").write_text(json.dumps(extras, indent=2, sort_keys=True))
    with open(out_dir / "generated_reports.txt", "w") as fh:
        for line in outputs.generated_reports:
            fh.write(line + "\n")
    if outputs.generated_images is not None:
        from .synthcorpus.corpus import write_f32, write_pgm

        for i, img in enumerate(outputs.generated_images[:4]):
            write_f32(out_dir / f"generated_{i:02d}.f32", img)
            write_pgm(out_dir / f"generated_{i:02d}.pgm", img)


def run_full_pipeline(cfg: RunConfig, work_dir: str | Path | None = None) -> PipelineResult:
    """Corpus through evaluation in one deterministic pass."""
    work = Path(work_dir) if work_dir else None
    corpus = corpus_step(cfg, out_dir=(work / "corpus") if work else None)
    probe = probe_step(cfg, corpus)
    vq, vq_history = vq_step(cfg, corpus, probe)
    vocab = build_vocab()
    model, vocab = fresh_lm(cfg, vocab)
    tokens = encode_corpus_tokens(vq, corpus)
    val_sets = make_val_sets(corpus, vocab, tokens, model.config.context_length)

    logs: dict[int, TrainLog] = {}
    if bool(cfg["train.run_stage1"]):
        logs[1] = lm_stage_step(cfg, corpus, tokens, model, vocab, stage=1, val_sets=val_sets)
    logs[2] = lm_stage_step(cfg, corpus, tokens, model, vocab, stage=2, val_sets=val_sets)

    outputs = eval_step(cfg, model, vocab, vq, probe, corpus)
    if work:
        work.mkdir(parents=True, exist_ok=True)
        save_probe(work / "probe.ckpt", probe)
        save_vq(work / "vq.ckpt", vq, probe.param_hash(), seed=derive_seed(cfg.seed, "vq_train"))
        save_lm(work / "lm.ckpt", model, vocab, meta={"stages": sorted(logs), **toggle_meta(cfg)})
        for stage, tlog in logs.items():
            tlog.write_csv(work / f"train_log_stage{stage}.csv")
            tlog.write_val_csv(work / f"val_log_stage{stage}.csv")
        write_eval_outputs(outputs, work / "eval")
        cfg.write_resolved(work)
        with open(work / "vq_history.json", "w") as fh:
            json.dump([vars(h) for h in vq_history], fh, indent=2)
    return PipelineResult(corpus, probe, vq, model, vocab, outputs, logs)


# ---------------------------------------------------------------------------
# Ablation matrix (one factor removed per row)
# ---------------------------------------------------------------------------

ABLATION_ROWS: dict[str, dict[str, object]] = {
    "full": {},
    "no_cip": {"vq.cip_enabled": False},
    "no_vqa": {"train.include_vqa": False},
    "no_stage1": {"train.run_stage1": False},
    "joint": {"train.objective": "joint"},
}

ABLATION_AXES: dict[str, list[str]] = {
    "cip": ["full", "no_cip"],
    "vqa": ["full", "no_vqa"],
    "stage1": ["full", "no_stage1"],
    "objective": ["full", "joint"],
    "all": list(ABLATION_ROWS),
}


def _ablation_row(row: str, base_values: dict, corpus_dir: str, out_dir: str) -> dict:
    cfg = RunConfig()
    cfg.values = dict(base_values)
    for key, value in ABLATION_ROWS[row].items():
        cfg.set(key, value)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(corpus_dir)
    probe = probe_step(cfg, corpus)
    vq, _ = vq_step(cfg, corpus, probe)
    vocab = build_vocab()
    model, vocab = fresh_lm(cfg, vocab)
    tokens = encode_corpus_tokens(vq, corpus)
    if bool(cfg["train.run_stage1"]):
        lm_stage_step(cfg, corpus, tokens, model, vocab, stage=1)
    lm_stage_step(cfg, corpus, tokens, model, vocab, stage=2)
    outputs = eval_step(cfg, model, vocab, vq, probe, corpus)
    cfg.write_resolved(out)
    write_eval_outputs(outputs, out)
    summary = {
        "row": row,
        "c2r_auroc": outputs.report.auroc,
        "c2r_f1": outputs.report.f1,
        "r2c_auroc": outputs.report.gen_auroc,
        "r2c_f1": outputs.report.gen_f1,
        "fid": outputs.report.fid,
        "vqa_accuracy": outputs.report.vqa_accuracy,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def run_ablation(
    cfg: RunConfig,
    corpus_dir: str | Path,
    out_root: str | Path,
    axis: str = "all",
    parallel: bool = False,
) -> dict:
    if axis not in ABLATION_AXES:
        raise ValueError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}")
    rows = ABLATION_AXES[axis]
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    args = [(row, dict(cfg.values), str(corpus_dir), str(out_root / row)) for row in rows]
    if parallel:
        with ProcessPoolExecutor(max_workers=min(len(rows), 5)) as pool:
            summaries = list(pool.map(_ablation_row_star, args))
    else:
        summaries = [_ablation_row(*a) for a in args]

    table = _ablation_table(summaries)
    (out_root / "ablation_table.txt").write_text(table)
    result = {"rows": summaries, "axis": axis}
    if "full" in rows and "joint" in rows:
        full = next(s for s in summaries if s["row"] == "full")
        joint = next(s for s in summaries if s["row"] == "joint")
        ordering_ok = (full["r2c_auroc"]["macro"] or 0.0) > (joint["r2c_auroc"]["macro"] or 0.0)
        result["instruct_beats_joint_r2c_macro_auroc"] = ordering_ok
        if not ordering_ok:
            log.warning(
                "fidelity finding: instruct objective did not beat joint on "
                "report-to-CXR macro AUROC (%.4f vs %.4f)",
                full["r2c_auroc"]["macro"], joint["r2c_auroc"]["macro"],
            )
    (out_root / "ablation_results.json").write_text(json.dumps(result, indent=2, sort_keys=True))
    return result


def _ablation_row_star(args):
    return _ablation_row(*args)


def _ablation_table(summaries: list[dict]) -> str:
    cols = [
        ("c2r AUROC mic", lambda s: s["c2r_auroc"]["micro"]),
        ("c2r AUROC mac", lambda s: s["c2r_auroc"]["macro"]),
        ("c2r F1 mic", lambda s: s["c2r_f1"]["micro"]),
        ("c2r F1 mac", lambda s: s["c2r_f1"]["macro"]),
        ("r2c AUROC mic", lambda s: s["r2c_auroc"]["micro"]),
        ("r2c AUROC mac", lambda s: s["r2c_auroc"]["macro"]),
        ("r2c F1 mic", lambda s: s["r2c_f1"]["micro"]),
        ("r2c F1 mac", lambda s: s["r2c_f1"]["macro"]),
        ("FID", lambda s: s["fid"]),
        ("VQA all", lambda s: s["vqa_accuracy"]["all"]),
    ]
    header = f"{'row':<12}" + "".join(f"{name:>15}" for name, _ in cols)
    lines = [header, "-" * len(header)]
    for s in summaries:
        cells = []
        for _, getter in cols:
            v = getter(s)
            cells.append(f"{v:>15.4f}" if v is not None else f"{'-':>15}")
        lines.append(f"{s['row']:<12}" + "".join(cells))
    return "\n".join(lines) + "\n"
