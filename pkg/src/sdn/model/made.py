"""Masked autoregressive Bernoulli model over binary codes.

Three masked hidden layers plus a masked logit layer. Output logit i may
depend only on code bits before i (natural ordering), which makes the
per-bit Bernoulli factorization a normalized distribution over the whole
code space: exhaustively checkable for small code widths.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class MadeMasks:
    """Per-layer binary masks, each shaped like its weight (out, in)."""

    hidden: list
    output: np.ndarray
    degrees: list


def build_made_masks(d_z, hidden_sizes, seed):
    """Connectivity masks for the autoregressive MLP.

    Hidden unit degrees are drawn uniformly from [1, max(1, d_z - 1)]; a
    hidden mask connects unit j to unit i when degree(j) <= degree(i), and
    the output mask requires degree(j) < i strictly. For d_z == 1 the output
    mask is all-zero: the single bit is an unconditional Bernoulli driven by
    the output bias.
    """
    if d_z < 1:
        raise ValueError("build_made_masks: d_z must be >= 1")
    if len(hidden_sizes) != 3:
        raise ValueError("build_made_masks: expected three hidden layer sizes")
    rng = np.random.default_rng(seed)
    degrees = [np.arange(1, d_z + 1)]
    hi = max(1, d_z - 1)
    for size in hidden_sizes:
        degrees.append(rng.integers(1, hi + 1, size=size))
    hidden = []
    for prev, cur in zip(degrees[:-1], degrees[1:]):
        hidden.append((prev[None, :] <= cur[:, None]).astype(np.float32))
    output = (degrees[-1][None, :] < degrees[0][:, None]).astype(np.float32)
    return MadeMasks(hidden=hidden, output=output, degrees=degrees)


def composite_mask(masks):
    """Product of all layer masks: nonzero entries are allowed dependencies."""
    total = masks.hidden[0]
    for m in masks.hidden[1:]:
        total = m @ total
    return masks.output @ total


def validate_codes(codes):
    arr = np.asarray(codes)
    if not np.all(np.abs(arr) == 1.0):
        raise ValueError("codes must be exactly -1 or +1 in every component")
    return arr
