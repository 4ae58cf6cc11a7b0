"""Training configuration and the `key = value` config file format."""

import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass
class TrainConfig:
    # model
    image_size: int = 32
    d_z: int = 32
    dz_prime: int = 64
    width: int = 8
    prior_hidden: int = 64
    self_attention: bool = False
    mismatch_prebinarize: bool = False
    # schedule
    set_size: int = 8
    batch_sets: int = 8
    iters: int = 2000
    seed: int = 0
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.0
    beta2: float = 0.999
    gamma0: float = 1.0
    gamma1: float = 0.1
    # data
    data_source: str = "synthetic"
    data_dir: str = ""
    identities: int = 256
    views: int = 16
    train_fraction: float = 0.78125
    # bookkeeping
    log_interval: int = 10
    checkpoint_interval: int = 500
    out_dir: str = "runs/default"

    def validate(self):
        if self.set_size < 1:
            raise ValueError("set_size must be >= 1")
        if self.batch_sets < 1:
            raise ValueError("batch_sets must be >= 1")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.gamma0 <= 0 or self.gamma1 <= 0:
            raise ValueError("margins must be strictly positive")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.image_size % 16 or self.image_size < 16:
            raise ValueError("image_size must be a multiple of 16, at least 16")
        if self.data_source not in ("synthetic", "directory"):
            raise ValueError(f"unknown data_source {self.data_source!r}")
        if self.data_source == "directory" and not self.data_dir:
            raise ValueError("data_dir required for directory source")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _parse_value(field, raw):
    if field.type is bool or field.default in (True, False):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for {field.name}: {raw!r}")
    typ = type(field.default)
    return typ(raw.strip())


def parse_config_text(text):
    """Parse `key = value` lines; '#' starts a comment; unknown keys error."""
    cfg = TrainConfig()
    for ln, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"config line {ln}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"config line {ln}: unknown key {key!r}")
        setattr(cfg, key, _parse_value(_FIELDS[key], raw))
    return cfg.validate()


def load_config(path):
    return parse_config_text(Path(path).read_text())


def config_to_text(cfg):
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(TrainConfig)]
    return "\n".join(lines) + "\n"
