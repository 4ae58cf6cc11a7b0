from .dataset import (
    DatasetDescriptor,
    DirectoryDataset,
    SetBatch,
    SyntheticDataset,
    open_dataset,
    split_identity_ids,
    write_synthetic_dataset,
)
from .sprites import (
    IDENTITY_SPACE,
    SHAPES,
    SpriteIdentity,
    ViewParams,
    foreground_fraction,
    identity_from_id,
    render_view,
    sample_view,
)
