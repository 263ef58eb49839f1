from .checkpoint import (
    CheckpointError,
    CheckpointHashError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    MAGIC_LM,
    MAGIC_PROBE,
    MAGIC_TRAIN,
    MAGIC_VQ,
    load_container,
    load_lm,
    load_probe,
    load_vq,
    save_container,
    save_lm,
    save_probe,
    save_vq,
)
from .loop import TrainConfig, TrainLog, load_train_state, save_train_state, train_stage
