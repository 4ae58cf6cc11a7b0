"""Set-structured datasets: on-the-fly synthetic sprites or an image
directory laid out as root/<identity>/<image files>.

Both sources produce SetBatch objects the trainer consumes; `sdn data synth`
writes the directory layout so synthetic and real data share one loader.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .sprites import identity_from_id, render_view, sample_view

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass
class SetBatch:
    images: np.ndarray  # (N, n, 3, H, W) float32 in [-1, 1]
    identity_ids: list


@dataclass
class DatasetDescriptor:
    source: str  # "synthetic" | "directory"
    identities: int
    views: int
    train_fraction: float
    seed: int
    image_size: int
    root: str = ""


def split_identity_ids(descriptor):
    """Disjoint train/test identity id lists."""
    count = descriptor.identities
    train = int(round(count * descriptor.train_fraction))
    ids = list(range(count))
    return ids[:train], ids[train:]


class SyntheticDataset:
    """Renders sprite sets on demand; effectively unlimited views."""

    def __init__(self, descriptor):
        if descriptor.source != "synthetic":
            raise ValueError("descriptor.source must be 'synthetic'")
        self.descriptor = descriptor
        self.train_ids, self.test_ids = split_identity_ids(descriptor)

    def _ids(self, split):
        return {"train": self.train_ids, "test": self.test_ids}[split]

    def sample_set_batch(self, split, n_sets, set_size, rng):
        ids = self._ids(split)
        if len(ids) < n_sets:
            raise ValueError(
                f"split {split!r} has {len(ids)} identities, need {n_sets}"
            )
        chosen = rng.choice(ids, size=n_sets, replace=False)
        size = self.descriptor.image_size
        images = np.empty((n_sets, set_size, 3, size, size), np.float32)
        for i, ident_id in enumerate(chosen):
            identity = identity_from_id(self.descriptor.seed, int(ident_id))
            for v in range(set_size):
                images[i, v] = render_view(identity, sample_view(rng), size)
        return SetBatch(images=images, identity_ids=[int(c) for c in chosen])

    def identity_views(self, ident_id, count, rng):
        """A fixed-size stack of views for one identity, (count, 3, H, W)."""
        identity = identity_from_id(self.descriptor.seed, int(ident_id))
        size = self.descriptor.image_size
        return np.stack(
            [render_view(identity, sample_view(rng), size) for _ in range(count)]
        )


class DirectoryDataset:
    """Loads root/<identity>/<file> image sets; 8-bit RGB, PNG or binary PPM."""

    def __init__(self, descriptor):
        if descriptor.source != "directory":
            raise ValueError("descriptor.source must be 'directory'")
        self.descriptor = descriptor
        root = Path(descriptor.root)
        self.index = {}
        if root.is_dir():
            for sub in sorted(p for p in root.iterdir() if p.is_dir()):
                files = sorted(
                    f for f in sub.iterdir() if f.suffix.lower() in _IMAGE_SUFFIXES
                )
                if files:
                    self.index[sub.name] = files
                else:
                    log.warning("identity %s has no images; excluded", sub.name)
        self.names = sorted(self.index)
        self.descriptor.identities = len(self.names)
        train = int(round(len(self.names) * descriptor.train_fraction))
        self.train_ids = list(range(train))
        self.test_ids = list(range(train, len(self.names)))

    def _ids(self, split):
        return {"train": self.train_ids, "test": self.test_ids}[split]

    def _load(self, path):
        size = self.descriptor.image_size
        try:
            with Image.open(path) as im:
                im = im.convert("RGB")
                if im.size != (size, size):
                    im = im.resize((size, size), Image.BILINEAR)
                arr = np.asarray(im, np.float32)
        except OSError as exc:
            log.warning("skipping unreadable image %s (%s)", path, exc)
            return None
        return (2.0 * arr / 255.0 - 1.0).transpose(2, 0, 1)

    def sample_set_batch(self, split, n_sets, set_size, rng):
        ids = self._ids(split)
        if len(ids) < n_sets:
            raise ValueError(
                f"split {split!r} has {len(ids)} identities, need {n_sets}"
            )
        chosen = rng.choice(ids, size=n_sets, replace=False)
        size = self.descriptor.image_size
        images = np.empty((n_sets, set_size, 3, size, size), np.float32)
        for i, idx in enumerate(chosen):
            files = self.index[self.names[int(idx)]]
            # without replacement when enough views exist, with otherwise
            replace = len(files) < set_size
            picks = rng.choice(len(files), size=set_size, replace=replace)
            for v, f in enumerate(picks):
                img = self._load(files[int(f)])
                if img is None:
                    raise OSError(f"unreadable image in batch: {files[int(f)]}")
                images[i, v] = img
        return SetBatch(images=images, identity_ids=[int(c) for c in chosen])

    def identity_views(self, idx, count, rng):
        files = self.index[self.names[int(idx)]]
        if count > len(files):
            raise ValueError(f"identity {self.names[int(idx)]} has {len(files)} views, need {count}")
        out = [self._load(f) for f in files[:count]]
        if any(o is None for o in out):
            raise OSError("unreadable image among identity views")
        return np.stack(out)


def open_dataset(descriptor):
    if descriptor.source == "synthetic":
        return SyntheticDataset(descriptor)
    if descriptor.source == "directory":
        return DirectoryDataset(descriptor)
    raise ValueError(f"unknown data source {descriptor.source!r}")


def write_synthetic_dataset(out_dir, identities, views, seed, image_size=32):
    """Materialize the synthetic source as root/<identity>/<view>.png.

    Regeneration from the same seed is bitwise identical, file for file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ident_id in range(identities):
        identity = identity_from_id(seed, ident_id)
        sub = out / f"id_{ident_id:04d}"
        sub.mkdir(exist_ok=True)
        for v in range(views):
            rng = np.random.default_rng([int(seed), int(ident_id), int(v)])
            img = render_view(identity, sample_view(rng), image_size)
            byte = np.clip(np.round((img + 1.0) / 2.0 * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(byte.transpose(1, 2, 0)).save(sub / f"view_{v:03d}.png")
    return out
