from .findings import (
    Finding,
    KINDS,
    NO_FINDING,
    PATHOLOGY_KINDS,
    SEVERITIES,
    SIDED_KINDS,
    StudyRecord,
    sample_findings,
    validate_findings,
)
from .grammar import GRAMMAR_VERSION, concise_sentence, render_report, verbose_sentence
from .render import Anatomy, region_mean, render_image
from .vqa import AnswerFacts, VqaItem, facts_entailed, gen_vqa
from .corpus import (
    CorpusManifest,
    build_corpus,
    load_corpus,
    make_record,
    read_f32,
    save_corpus,
    write_f32,
)
