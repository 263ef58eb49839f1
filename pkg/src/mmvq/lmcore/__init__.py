from .vocab import (
    EOS,
    PAD,
    SPECIALS,
    UNK,
    Vocab,
    build_text_vocab,
    detokenize,
    ids_from_image_tokens,
    image_tokens_from_ids,
    tokenize,
)
from .model import LmConfig, TransformerLM, build_lm, expand_vocab
from .sample import SamplerConfig, sample, sample_batch
