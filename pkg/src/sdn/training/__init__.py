from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, config_to_text, load_config, parse_config_text
from .trainer import (
    METRICS_FIELDS,
    MetricsRow,
    Trainer,
    TrainingHalted,
    descriptor_from_config,
    load_trainer,
    run_training,
)
