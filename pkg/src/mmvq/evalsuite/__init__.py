from .labeler import LabelEntry, LabelVector, STATES, extract_labels
from .classify import (
    AggregateResult,
    JaccardResult,
    auroc,
    auroc_by_kind,
    binarize_state,
    f1,
    f1_by_kind,
    jaccard,
    label_matrix,
)
from .fid import FidResult, fid, fid_detailed
from .nlg import bleu, rouge_l
from .vqa_score import vqa_accuracy, vqa_score
from .report import (
    EvalOutputs,
    MetricsReport,
    evaluate_full,
    gen_image_metrics,
    generate_images,
    generate_reports,
    generate_vqa_answers,
    token_idempotence,
)
