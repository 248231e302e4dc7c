from jgrp2o.training.optimizer import adam_step, AdamState, TrainConfig  # noqa
from jgrp2o.training.checkpoint import (  # noqa
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from jgrp2o.training.trainer import fit, loss_objective, Trainer  # noqa
