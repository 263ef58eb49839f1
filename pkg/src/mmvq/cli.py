"""Operator CLI: corpus, train-vq, train-lm, infer, eval, gradcheck, ablate.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every command
echoes its fully resolved configuration into the output directory and never
mutates its input artifacts. ``MMVQ_SEED`` provides the default seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import RunConfig, UsageError
from .gradsuite import TOLERANCE, run_gradient_suite
from .instructset.build import PromptRecord, prompt_ids
from .instructset.template import instruction_variant
from .lmcore.sample import SamplerConfig, sample
from .lmcore.vocab import image_tokens_from_ids
from .numcore import derive_seed
from .synthcorpus.corpus import load_corpus, read_f32, write_f32, write_pgm
from .trainer.checkpoint import CheckpointError, load_lm, load_probe, load_vq, save_lm, save_probe, save_vq
from .vqtok.model import ImageTokens, decode, encode
from .vqtok.probe import train_probe


def _build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "preset", None):
        cfg.apply_preset(args.preset)
    if getattr(args, "config", None):
        cfg.load_file(args.config)
    if getattr(args, "set", None):
        cfg.apply_overrides(args.set)
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    return cfg


def _require(path: Path, what: str, produced_by: str) -> Path:
    if not Path(path).exists():
        raise UsageError(f"missing {what} at {path}; produce it with `mmvq {produced_by}`")
    return Path(path)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--preset", help="named config preset (desk, paper)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key")
    p.add_argument("--seed", type=int, help="run seed (default: MMVQ_SEED or 0)")


def cmd_corpus(args) -> int:
    cfg = _build_config(args)
    if args.n is not None:
        cfg.set("corpus.n_records", args.n)
    out = Path(args.out)
    manifest = pipeline.corpus_step(cfg, out_dir=out)
    cfg.write_resolved(out)
    n_train = len(manifest.split("train"))
    n_test = len(manifest.split("test"))
    n_lateral = sum(1 for r in manifest.records if r.view == "lateral")
    print(f"corpus: {len(manifest.records)} records ({n_train} train / {n_test} test, "
          f"{n_lateral} lateral) -> {out}")
    return 0


def cmd_train_vq(args) -> int:
    cfg = _build_config(args)
    corpus = load_corpus(_require(Path(args.corpus), "corpus", "corpus"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.probe:
        probe, _ = load_probe(_require(Path(args.probe), "probe checkpoint", "train-vq"))
        print(f"probe: loaded {args.probe} (hash {probe.param_hash()[:12]})")
    else:
        probe = train_probe(corpus, pipeline.probe_config(cfg), seed=derive_seed(cfg.seed, "probe"))
        save_probe(out / "probe.ckpt", probe)
        print(f"probe: trained and saved to {out / 'probe.ckpt'}")
    vq, history = pipeline.vq_step(cfg, corpus, probe)
    save_vq(out / "vq.ckpt", vq, probe.param_hash(), seed=derive_seed(cfg.seed, "vq_train"))
    with open(out / "vq_history.json", "w") as fh:
        json.dump([vars(h) for h in history], fh, indent=2)
    cfg.write_resolved(out)
    print(f"tokenizer: final loss {history[-1].loss:.4f} "
          f"(usage entropy {history[-1].usage_entropy:.2f}) -> {out / 'vq.ckpt'}")
    return 0


def cmd_train_lm(args) -> int:
    cfg = _build_config(args)
    corpus = load_corpus(_require(Path(args.corpus), "corpus", "corpus"))
    vq, _ = load_vq(_require(Path(args.vq), "VQ checkpoint", "train-vq"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.init:
        model, vocab, _ = load_lm(_require(Path(args.init), "LM checkpoint", "train-lm --stage 1"))
    else:
        model, vocab = pipeline.fresh_lm(cfg, pipeline.build_vocab())
    tokens = pipeline.encode_corpus_tokens(vq, corpus)
    val_sets = pipeline.make_val_sets(corpus, vocab, tokens, model.config.context_length)
    log = pipeline.lm_stage_step(cfg, corpus, tokens, model, vocab, stage=args.stage,
                                 out_dir=out, val_sets=val_sets)
    save_lm(out / "lm.ckpt", model, vocab,
            meta={"stage": args.stage, **pipeline.toggle_meta(cfg)})
    log.write_csv(out / "train_log.csv")
    log.write_val_csv(out / "val_log.csv")
    cfg.write_resolved(out)
    last = [r for r in log.rows if r["task"] == "all"][-1]
    print(f"stage {args.stage}: {last['step']} steps, final loss {last['loss_mean']:.4f} "
          f"-> {out / 'lm.ckpt'}")
    return 0


def _load_infer_artifacts(args):
    model, vocab, _ = load_lm(_require(Path(args.ckpt), "LM checkpoint", "train-lm"))
    vq, _ = load_vq(_require(Path(args.vq), "VQ checkpoint", "train-vq"))
    return model, vocab, vq


def _sampler(args, image_constrained: bool, d_z: int) -> SamplerConfig:
    if args.top_k is not None:
        return SamplerConfig(mode="top_k", k=args.top_k, temperature=args.temperature or 1.0,
                             max_new_tokens=args.max_new_tokens,
                             image_constrained=image_constrained, d_z=d_z)
    if args.temperature is not None:
        return SamplerConfig(mode="temperature", temperature=args.temperature,
                             max_new_tokens=args.max_new_tokens,
                             image_constrained=image_constrained, d_z=d_z)
    return SamplerConfig(mode="greedy", max_new_tokens=args.max_new_tokens,
                         image_constrained=image_constrained, d_z=d_z)


def cmd_infer(args) -> int:
    model, vocab, vq = _load_infer_artifacts(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.sample_seed

    if args.task == "r2c":
        if not args.report:
            raise UsageError("--task r2c requires --report")
        cfg = _sampler(args, image_constrained=True, d_z=vq.config.d_z)
        rec = PromptRecord("REPORT_TO_CXR", instruction_variant("REPORT_TO_CXR", 0),
                           args.report, ImageTokens(np.zeros(vq.config.d_z)))
        ids = sample(model, vocab, prompt_ids(rec, vocab), cfg, seed=seed)
        tokens = ImageTokens(np.array(image_tokens_from_ids(ids, vocab)))
        image = decode(tokens, vq)
        write_f32(out / "generated.f32", image)
        write_pgm(out / "generated.pgm", image)
        print(f"image -> {out / 'generated.f32'} (+ .pgm preview)")
        return 0

    image = read_f32(_require(Path(args.image), "input image", "corpus")) if args.image else None
    if image is None:
        raise UsageError(f"--task {args.task} requires --image")
    tokens = encode(image, vq)
    if args.task == "c2r":
        instruction = instruction_variant("CXR_TO_REPORT", 0)
    else:
        if not args.question:
            raise UsageError("--task vqa requires --question")
        instruction = args.question
    task = "CXR_TO_REPORT" if args.task == "c2r" else "CXR_VQA"
    cfg = _sampler(args, image_constrained=False, d_z=vq.config.d_z)
    rec = PromptRecord(task, instruction, tokens, "x")
    ids = sample(model, vocab, prompt_ids(rec, vocab), cfg, seed=seed)
    text = vocab.decode([i for i in ids if i < vocab.k_text])
    name = "report.txt" if args.task == "c2r" else "answer.txt"
    (out / name).write_text(text + "\n")
    print(text)
    return 0


def cmd_eval(args) -> int:
    cfg = _build_config(args)
    corpus = load_corpus(_require(Path(args.corpus), "corpus", "corpus"))
    model, vocab, _ = load_lm(_require(Path(args.ckpt), "LM checkpoint", "train-lm"))
    vq, _ = load_vq(_require(Path(args.vq), "VQ checkpoint", "train-vq"))
    probe, _ = load_probe(_require(Path(args.probe), "probe checkpoint", "train-vq"))
    out = Path(args.out)
    outputs = pipeline.eval_step(cfg, model, vocab, vq, probe, corpus)
    pipeline.write_eval_outputs(outputs, out)
    cfg.write_resolved(out)
    rep = outputs.report
    print(f"c2r: micro-AUROC {rep.auroc['micro']:.4f} micro-F1 {rep.f1['micro']:.4f} "
          f"jaccard-micro {rep.jaccard['micro']:.4f}")
    print(f"r2c: macro-AUROC {rep.gen_auroc['macro']:.4f} FID {rep.fid:.4f}")
    print(f"vqa: accuracy {rep.vqa_accuracy['all']:.4f}")
    print(f"metrics -> {out / 'metrics.json'}")
    return 0


def cmd_gradcheck(args) -> int:
    del args
    results = run_gradient_suite()
    worst = 0.0
    for name, res in results.items():
        if isinstance(res, bool):
            print(f"{name:<28} {'ok' if res else 'FAIL'} (nonzero flow)")
            if not res:
                worst = float("inf")
            continue
        status = "ok" if res.ok and res.max_rel_err < TOLERANCE else "FAIL"
        print(f"{name:<28} {status}  max rel err {res.max_rel_err:.3e} over {res.n_coords} coords")
        worst = max(worst, res.max_rel_err)
    print(f"worst relative error: {worst:.3e} (tolerance {TOLERANCE:.0e})")
    return 0 if worst < TOLERANCE else 1


def cmd_ablate(args) -> int:
    cfg = _build_config(args)
    corpus_dir = _require(Path(args.corpus), "corpus", "corpus")
    result = pipeline.run_ablation(cfg, corpus_dir, Path(args.out), axis=args.axis,
                                   parallel=args.parallel)
    print((Path(args.out) / "ablation_table.txt").read_text())
    if "instruct_beats_joint_r2c_macro_auroc" in result:
        verdict = "reproduced" if result["instruct_beats_joint_r2c_macro_auroc"] else \
            "NOT reproduced (fidelity finding logged)"
        print(f"instruct > joint on r2c macro-AUROC: {verdict}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmvq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus", help="generate the synthetic corpus")
    _add_common(p)
    p.add_argument("--n", type=int, help="number of records")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_corpus)

    p = sub.add_parser("train-vq", help="train the probe (if needed) and the VQ tokenizer")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--probe", help="reuse an existing probe checkpoint")
    p.set_defaults(fn=cmd_train_vq)

    p = sub.add_parser("train-lm", help="instruction-tune the language model")
    _add_common(p)
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vq", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="checkpoint to continue from (stage-1 output for stage 2)")
    p.set_defaults(fn=cmd_train_lm)

    p = sub.add_parser("infer", help="run one inference")
    p.add_argument("--task", choices=("c2r", "r2c", "vqa"), required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vq", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image", help="input .f32 image (c2r, vqa)")
    p.add_argument("--report", help="input report text (r2c)")
    p.add_argument("--question", help="question text (vqa)")
    p.add_argument("--greedy", action="store_true", help="greedy decoding (default)")
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--max-new-tokens", dest="max_new_tokens", type=int, default=64)
    p.add_argument("--sample-seed", dest="sample_seed", type=int, default=0)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="run the evaluation suite")
    _add_common(p)
    p.add_argument("--suite", choices=("full",), default="full")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vq", required=True)
    p.add_argument("--probe", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ablate", help="run the ablation matrix")
    _add_common(p)
    p.add_argument("--axis", choices=sorted(pipeline.ABLATION_AXES), default="all")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", action="store_true", help="run rows concurrently")
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, FileNotFoundError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
