"""Procedural sprite identities: images of the same identity form sets.

An identity is a (shape, hue, scale, stroke) combination rendered under
random view transforms (rotation, translation, brightness). The identity
space is 4 shapes x 12 hues x 3 scales x 2 stroke flags = 288 combinations;
a dataset seed permutes which combination each integer identity id gets.

Rendering is 4x supersampled and box-filtered so regeneration is bitwise
reproducible everywhere.
"""

import colorsys
from dataclasses import dataclass

import numpy as np

SHAPES = ("triangle", "square", "ellipse", "star")
HUE_COUNT = 12
SCALES = (0.4, 0.55, 0.7)
# per-shape size factor equalizing covered area across shapes
_SHAPE_FACTOR = {"triangle": 1.25, "square": 0.80, "ellipse": 1.15, "star": 1.25}
_SUPERSAMPLE = 4
_STROKE_SHRINK = 0.78
_STROKE_DARKEN = 0.35
IDENTITY_SPACE = len(SHAPES) * HUE_COUNT * len(SCALES) * 2


@dataclass(frozen=True)
class SpriteIdentity:
    shape: str
    hue: float
    scale: float
    stroke: bool

    @property
    def color(self):
        return np.array(colorsys.hsv_to_rgb(self.hue, 0.9, 0.9), np.float32)


@dataclass(frozen=True)
class ViewParams:
    angle: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    brightness: float = 1.0


def identity_from_id(dataset_seed, identity_id):
    """Deterministic identity parameters; the seed permutes the combo table."""
    if not 0 <= identity_id < IDENTITY_SPACE:
        raise ValueError(f"identity_id must be in [0, {IDENTITY_SPACE})")
    perm = np.random.default_rng([int(dataset_seed), 0xC0FFEE]).permutation(IDENTITY_SPACE)
    combo = int(perm[identity_id])
    shape_idx, rest = divmod(combo, HUE_COUNT * len(SCALES) * 2)
    hue_idx, rest = divmod(rest, len(SCALES) * 2)
    scale_idx, stroke = divmod(rest, 2)
    return SpriteIdentity(
        shape=SHAPES[shape_idx],
        hue=hue_idx / HUE_COUNT,
        scale=SCALES[scale_idx],
        stroke=bool(stroke),
    )


def sample_view(rng):
    return ViewParams(
        angle=float(rng.uniform(0.0, 2 * np.pi)),
        dx=float(rng.uniform(-0.12, 0.12)),
        dy=float(rng.uniform(-0.12, 0.12)),
        brightness=float(rng.uniform(0.8, 1.2)),
    )


def _inside(shape, qx, qy):
    """Membership test in the unit shape frame."""
    if shape == "square":
        return np.maximum(np.abs(qx), np.abs(qy)) <= 1.0
    if shape == "ellipse":
        return qx * qx + (qy / 0.62) ** 2 <= 1.0
    if shape == "triangle":
        verts = [
            (np.sin(2 * np.pi * k / 3), -np.cos(2 * np.pi * k / 3)) for k in range(3)
        ]
        inside = np.ones_like(qx, bool)
        for k in range(3):
            ax, ay = verts[k]
            bx, by = verts[(k + 1) % 3]
            cross = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
            inside &= cross >= 0
        return inside
    if shape == "star":
        rho = np.sqrt(qx * qx + qy * qy)
        phi = np.arctan2(qy, qx)
        sector = np.mod(phi, 2 * np.pi / 5)
        edge = np.cos(np.pi / 5) / np.cos(sector - np.pi / 5)
        return rho <= edge
    raise ValueError(f"unknown shape {shape!r}")


def render_view(identity, view, size):
    """Anti-aliased (3, size, size) image in [-1, 1]; background is -1."""
    if size < 16:
        raise ValueError("render_view: size must be >= 16")
    s = size * _SUPERSAMPLE
    half = (np.arange(s, dtype=np.float64) + 0.5) / s * 2.0 - 1.0
    px, py = np.meshgrid(half, half)
    # image point -> shape frame: un-translate, un-rotate, un-scale
    tx = px - view.dx
    ty = py - view.dy
    ca, sa = np.cos(-view.angle), np.sin(-view.angle)
    rx = ca * tx - sa * ty
    ry = sa * tx + ca * ty
    extent = identity.scale * _SHAPE_FACTOR[identity.shape]
    qx, qy = rx / extent, ry / extent

    fill = _inside(identity.shape, qx, qy)
    base = np.clip(identity.color * view.brightness, 0.0, 1.0)
    img = np.zeros((s, s, 3), np.float64)
    img[fill] = base
    if identity.stroke:
        shrunk = _inside(identity.shape, qx / _STROKE_SHRINK, qy / _STROKE_SHRINK)
        img[fill & ~shrunk] = base * _STROKE_DARKEN
    small = img.reshape(size, _SUPERSAMPLE, size, _SUPERSAMPLE, 3).mean(axis=(1, 3))
    return (2.0 * small.transpose(2, 0, 1) - 1.0).astype(np.float32)


def foreground_fraction(image):
    """Fraction of pixels that differ from the -1 background."""
    return float((image.max(axis=0) > -0.999).mean())
