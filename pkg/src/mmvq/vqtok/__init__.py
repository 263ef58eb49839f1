from .model import (
    ImageTokens,
    VqConfig,
    VqModel,
    build_vq,
    decode,
    decode_batch,
    encode,
    encode_batch,
    quantize,
)
from .probe import (
    ProbeConfig,
    ProbeModel,
    build_probe,
    cip_loss,
    kind_targets,
    probe_features,
    probe_logits,
    train_probe,
)
from .train import VqEpochStats, VqTrainConfig, train_vq
