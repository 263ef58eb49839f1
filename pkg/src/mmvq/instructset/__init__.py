from .template import (
    END_MARKER,
    INSTRUCTIONS_CXR_TO_REPORT,
    INSTRUCTIONS_REPORT_TO_CXR,
    PREAMBLE,
    RESPONSE_KEY,
    instruction_variant,
    parse_template,
    pick_instruction,
    render_inference,
    render_template,
    serialize_image_span,
    template_texts,
)
from .nlif import NLIF_ITEMS, NlifItem, nlif_texts
from .build import (
    PromptRecord,
    TASKS,
    TokenizedExample,
    batch_nll,
    build_example,
    collate,
    export_examples,
    instruct_loss,
    joint_loss,
    prompt_ids,
    render_record,
)
from .mixing import (
    MixSchedule,
    MixStream,
    STAGE1_WEIGHTS,
    STAGE2_WEIGHTS,
    TaskPool,
    build_pools,
    mix_batches,
    stage_records,
)
