import json
from pathlib import Path

import numpy as np
import pytest

from mmvq.cli import main
from mmvq.synthcorpus.corpus import read_f32

MINI_ARGS = [
    "--set", "probe.epochs=4",
    "--set", "vq.epochs=1",
    "--set", "train.stage1_steps=6",
    "--set", "train.stage2_steps=4",
    "--set", "train.warmup_steps=1",
    "--set", "train.eval_interval=0",
    "--set", "eval.max_studies=12",
    "--set", "eval.vqa_per_study=2",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """corpus -> train-vq -> train-lm (both stages) through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    assert main(["corpus", "--n", "780", "--seed", "3", "--out", str(corpus)]) == 0
    vq_dir = root / "vq"
    assert main(["train-vq", "--corpus", str(corpus), "--out", str(vq_dir), *MINI_ARGS]) == 0
    lm1 = root / "lm1"
    assert main([
        "train-lm", "--stage", "1", "--corpus", str(corpus),
        "--vq", str(vq_dir / "vq.ckpt"), "--out", str(lm1), *MINI_ARGS,
    ]) == 0
    lm2 = root / "lm2"
    assert main([
        "train-lm", "--stage", "2", "--corpus", str(corpus),
        "--vq", str(vq_dir / "vq.ckpt"), "--out", str(lm2),
        "--init", str(lm1 / "lm.ckpt"), *MINI_ARGS,
    ]) == 0
    return root


def test_corpus_outputs(tmp_path):
    out = tmp_path / "c"
    assert main(["corpus", "--n", "12", "--seed", "1", "--out", str(out)]) == 0
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 13  # meta + 12 records
    assert len(list((out / "images").glob("*.f32"))) == 12
    assert (out / "resolved.cfg").exists()


def test_corpus_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["corpus", "--n", "15", "--seed", "5", "--out", str(a)]) == 0
    assert main(["corpus", "--n", "15", "--seed", "5", "--out", str(b)]) == 0
    assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
    for img in sorted((a / "images").glob("*.f32")):
        assert img.read_bytes() == (b / "images" / img.name).read_bytes()


def test_missing_out_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["corpus", "--n", "10"])
    assert exc.value.code == 2


def test_unknown_config_key_exit_2(tmp_path):
    rc = main(["corpus", "--n", "10", "--out", str(tmp_path / "x"), "--set", "bogus.key=1"])
    assert rc == 2


def test_missing_prerequisite_named(tmp_path, capsys):
    rc = main([
        "train-lm", "--stage", "1", "--corpus", str(tmp_path / "nope"),
        "--vq", str(tmp_path / "vq.ckpt"), "--out", str(tmp_path / "o"),
    ])
    assert rc == 2
    err = capsys.readouterr().err
    assert "mmvq corpus" in err


def test_artifacts_exist(workspace):
    assert (workspace / "vq" / "probe.ckpt").exists()
    assert (workspace / "vq" / "vq.ckpt").exists()
    assert (workspace / "vq" / "resolved.cfg").exists()
    assert (workspace / "lm2" / "lm.ckpt").exists()
    assert (workspace / "lm2" / "train_log.csv").exists()


def test_infer_r2c_writes_image(workspace, tmp_path):
    out = tmp_path / "gen"
    rc = main([
        "infer", "--task", "r2c", "--report", "Severe left opacity is present.",
        "--ckpt", str(workspace / "lm2" / "lm.ckpt"),
        "--vq", str(workspace / "vq" / "vq.ckpt"), "--out", str(out), "--greedy",
    ])
    assert rc == 0
    img = read_f32(out / "generated.f32")
    assert img.shape == (32, 32)
    assert (out / "generated.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")
    # deterministic rerun
    out2 = tmp_path / "gen2"
    main([
        "infer", "--task", "r2c", "--report", "Severe left opacity is present.",
        "--ckpt", str(workspace / "lm2" / "lm.ckpt"),
        "--vq", str(workspace / "vq" / "vq.ckpt"), "--out", str(out2), "--greedy",
    ])
    assert (out / "generated.f32").read_bytes() == (out2 / "generated.f32").read_bytes()


def test_infer_c2r_and_vqa(workspace, tmp_path, capsys):
    image = next((workspace / "corpus" / "images").glob("*.f32"))
    out = tmp_path / "rep"
    rc = main([
        "infer", "--task", "c2r", "--image", str(image),
        "--ckpt", str(workspace / "lm2" / "lm.ckpt"),
        "--vq", str(workspace / "vq" / "vq.ckpt"), "--out", str(out),
    ])
    assert rc == 0
    assert (out / "report.txt").exists()
    rc = main([
        "infer", "--task", "vqa", "--image", str(image),
        "--question", "Is there a pleural effusion?",
        "--ckpt", str(workspace / "lm2" / "lm.ckpt"),
        "--vq", str(workspace / "vq" / "vq.ckpt"), "--out", str(out),
    ])
    assert rc == 0
    assert (out / "answer.txt").exists()


def test_infer_missing_input_usage_error(workspace, tmp_path):
    rc = main([
        "infer", "--task", "r2c",
        "--ckpt", str(workspace / "lm2" / "lm.ckpt"),
        "--vq", str(workspace / "vq" / "vq.ckpt"), "--out", str(tmp_path / "x"),
    ])
    assert rc == 2


def test_eval_schema_complete(workspace, tmp_path):
    out = tmp_path / "eval"
    rc = main([
        "eval", "--suite", "full",
        "--ckpt", str(workspace / "lm2" / "lm.ckpt"),
        "--vq", str(workspace / "vq" / "vq.ckpt"),
        "--probe", str(workspace / "vq" / "probe.ckpt"),
        "--corpus", str(workspace / "corpus"), "--out", str(out), *MINI_ARGS,
    ])
    assert rc == 0
    metrics = json.loads((out / "metrics.json").read_text())
    for field in ("auroc", "f1", "jaccard", "fid", "rouge_l", "gen_auroc", "gen_f1",
                  "bleu1", "bleu2", "bleu3", "bleu4", "vqa_accuracy"):
        assert field in metrics
        assert metrics[field] is not None
    for agg in ("micro", "macro", "weighted", "per_kind"):
        assert metrics["auroc"][agg] is not None
        assert metrics["jaccard"]["micro"] is not None
    assert metrics["vqa_accuracy"]["all"] is not None
    assert (out / "metrics.csv").exists()
    assert (out / "eval_extras.json").exists()


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "worst relative error" in out


def test_ablate_parallel_flag(workspace, tmp_path):
    out = tmp_path / "ablp"
    rc = main([
        "ablate", "--axis", "cip", "--corpus", str(workspace / "corpus"),
        "--out", str(out), "--parallel", *MINI_ARGS,
    ])
    assert rc == 0
    results = json.loads((out / "ablation_results.json").read_text())
    assert {s["row"] for s in results["rows"]} == {"full", "no_cip"}
    assert (out / "full" / "metrics.json").exists()
    assert (out / "no_cip" / "metrics.json").exists()


def test_lm_checkpoint_records_toggles(workspace):
    from mmvq.trainer.checkpoint import load_lm

    _, _, meta = load_lm(workspace / "lm2" / "lm.ckpt")
    assert meta["objective"] == "instruct"
    assert meta["include_vqa"] is True
    assert meta["cip_used_tokenizer"] is True


def test_ablate_objective_axis(workspace, tmp_path):
    out = tmp_path / "abl"
    rc = main([
        "ablate", "--axis", "objective", "--corpus", str(workspace / "corpus"),
        "--out", str(out), *MINI_ARGS,
    ])
    assert rc == 0
    results = json.loads((out / "ablation_results.json").read_text())
    assert {s["row"] for s in results["rows"]} == {"full", "joint"}
    assert "instruct_beats_joint_r2c_macro_auroc" in results
    # resolved configs differ in exactly one key
    full_cfg = (out / "full" / "resolved.cfg").read_text().splitlines()
    joint_cfg = (out / "joint" / "resolved.cfg").read_text().splitlines()
    diff = [(a, b) for a, b in zip(full_cfg, joint_cfg) if a != b]
    assert len(diff) == 1
    assert diff[0][0].startswith("train.objective") and "instruct" in diff[0][0]
    assert "joint" in diff[0][1]
