"""Task pools and the two-stage mixing stream.

Stage 1 draws image/report pairs from every record with either report style
admitted; stage 2 restricts to frontal-view records and concise reports.
Task kinds are drawn i.i.d. per example from the stage proportions. The
stream object owns its RNG and a draw counter so training can checkpoint
and resume it bit-exactly; an optional warmup prefix serves NL_IF-only
examples before the mixed schedule starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numcore import np_rng
from ..synthcorpus.corpus import CorpusManifest
from ..synthcorpus.findings import StudyRecord
from ..vqtok.model import ImageTokens
from .build import TASKS, PromptRecord
from .nlif import NLIF_ITEMS
from .template import pick_instruction

# Published mixing values for (CXR-to-report, report-to-CXR, CXR-VQA, NL-IF).
# The stage-2 set sums to 110%, so both stages are treated as sampling
# weights and normalized; the stage-2 task shares are therefore
# 21/110, 21/110, 63/110, 5/110.
STAGE1_WEIGHTS = {"CXR_TO_REPORT": 30.0, "REPORT_TO_CXR": 30.0, "CXR_VQA": 20.0, "NL_IF": 20.0}
STAGE2_WEIGHTS = {"CXR_TO_REPORT": 21.0, "REPORT_TO_CXR": 21.0, "CXR_VQA": 63.0, "NL_IF": 5.0}


@dataclass
class MixSchedule:
    proportions: dict[str, float]

    def __post_init__(self):
        if set(self.proportions) - set(TASKS):
            raise ValueError(f"unknown tasks in schedule: {set(self.proportions) - set(TASKS)}")
        total = sum(self.proportions.values())
        if total <= 0 or any(v < 0 for v in self.proportions.values()):
            raise ValueError(f"proportions must be non-negative with a positive sum, got {self.proportions}")
        self.proportions = {k: v / total for k, v in self.proportions.items()}

    @staticmethod
    def for_stage(stage: int, include_vqa: bool = True) -> "MixSchedule":
        base = dict(STAGE1_WEIGHTS if stage == 1 else STAGE2_WEIGHTS)
        if not include_vqa:
            # drop the VQA share; normalization redistributes proportionally
            base.pop("CXR_VQA")
        return MixSchedule(base)


def stage_records(corpus: CorpusManifest, stage: int, split: str = "train") -> list[StudyRecord]:
    records = corpus.split(split)
    if stage == 1:
        return records
    if stage == 2:
        return [r for r in records if r.view == "frontal"]
    raise ValueError(f"stage must be 1 or 2, got {stage}")


class TaskPool:
    """Uniform draw of one PromptRecord for a single task kind."""

    def __init__(self, task: str, records: list[StudyRecord], tokens: dict[str, np.ndarray],
                 styles: tuple[str, ...] = ("concise",)):
        self.task = task
        self.records = records
        self.tokens = tokens
        self.styles = styles
        if task != "NL_IF" and not records:
            raise ValueError(f"empty record pool for task {task}")

    def _image(self, rec: StudyRecord) -> ImageTokens:
        return ImageTokens(self.tokens[rec.study_id])

    def _report(self, rec: StudyRecord, rng) -> str:
        style = self.styles[int(rng.integers(len(self.styles)))]
        return rec.report_verbose if style == "verbose" else rec.report_concise

    def draw(self, rng: np.random.Generator) -> PromptRecord:
        if self.task == "NL_IF":
            item = NLIF_ITEMS[int(rng.integers(len(NLIF_ITEMS)))]
            return PromptRecord("NL_IF", item.instruction, item.input, item.response)
        rec = self.records[int(rng.integers(len(self.records)))]
        if self.task == "CXR_TO_REPORT":
            return PromptRecord(
                "CXR_TO_REPORT",
                pick_instruction("CXR_TO_REPORT", rng),
                self._image(rec),
                self._report(rec, rng),
                source_study=rec.study_id,
            )
        if self.task == "REPORT_TO_CXR":
            return PromptRecord(
                "REPORT_TO_CXR",
                pick_instruction("REPORT_TO_CXR", rng),
                self._report(rec, rng),
                self._image(rec),
                source_study=rec.study_id,
            )
        qa = rec.vqa[int(rng.integers(len(rec.vqa)))]
        return PromptRecord(
            "CXR_VQA", qa.question, self._image(rec), qa.answer, source_study=rec.study_id
        )


def build_pools(
    corpus: CorpusManifest, tokens: dict[str, np.ndarray], stage: int
) -> dict[str, TaskPool]:
    records = stage_records(corpus, stage)
    if not records:
        raise ValueError(f"no records left after stage-{stage} filtering")
    styles = ("verbose", "concise") if stage == 1 else ("concise",)
    return {
        "CXR_TO_REPORT": TaskPool("CXR_TO_REPORT", records, tokens, styles),
        "REPORT_TO_CXR": TaskPool("REPORT_TO_CXR", records, tokens, styles),
        "CXR_VQA": TaskPool("CXR_VQA", records, tokens),
        "NL_IF": TaskPool("NL_IF", [], {}),
    }


@dataclass
class MixStream:
    """Infinite, resumable iterator of PromptRecords."""

    pools: dict[str, TaskPool]
    schedule: MixSchedule
    seed: int
    warmup_draws: int = 0
    rng: np.random.Generator = field(init=False)
    draws: int = field(default=0)

    def __post_init__(self):
        self.rng = np_rng(self.seed, "mix_stream")
        self._tasks = [t for t in TASKS if t in self.schedule.proportions]
        self._probs = np.array([self.schedule.proportions[t] for t in self._tasks])
        for task, prop in self.schedule.proportions.items():
            if prop > 0 and task != "NL_IF" and not self.pools[task].records:
                raise ValueError(f"schedule requires task {task} but its pool is empty")

    def __iter__(self):
        return self

    def __next__(self) -> PromptRecord:
        if self.draws < self.warmup_draws:
            task = "NL_IF"
        else:
            task = self._tasks[int(self.rng.choice(len(self._tasks), p=self._probs))]
        self.draws += 1
        return self.pools[task].draw(self.rng)

    def state(self) -> dict:
        return {"rng": self.rng.bit_generator.state, "draws": self.draws}

    def restore(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]
        self.draws = int(state["draws"])


def mix_batches(
    pools: dict[str, TaskPool],
    schedule: MixSchedule,
    stage: int,
    rng_or_seed,
    warmup_draws: int = 0,
) -> MixStream:
    """The stage's example stream; `stage` is carried by the pools' filters."""
    del stage  # filtering already happened in build_pools
    seed = rng_or_seed if isinstance(rng_or_seed, int) else int(rng_or_seed.integers(2**63))
    return MixStream(pools, schedule, seed, warmup_draws)
