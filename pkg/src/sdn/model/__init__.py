from .made import MadeMasks, build_made_masks, composite_mask, validate_codes
from .networks import ModelConfig, SdnModel

__all__ = [
    "MadeMasks",
    "build_made_masks",
    "composite_mask",
    "validate_codes",
    "ModelConfig",
    "SdnModel",
]
