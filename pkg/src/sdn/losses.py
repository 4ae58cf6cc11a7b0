"""The two training objectives.

Generator loss: per set, the count of generated-code bits disagreeing with
the conditioning code plus the summed image energies of the generated set;
gradients reach only generator parameters (the encoder/discriminator are
evaluated but frozen by the backward wrt-filter).

Model loss: prior negative log likelihood on the stop-gradient set code,
real-image reconstruction plus a hinge pushing the unary term below -gamma0,
and hinges pushing generated images above the two margins. Gradients reach
only encoder/decoder/unary/prior parameters.

Both return per-set averages over the batch along with a component
breakdown whose values sum to the total.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, ops


@dataclass
class Margins:
    gamma0: float = 1.0
    gamma1: float = 0.1

    def __post_init__(self):
        if self.gamma0 <= 0 or self.gamma1 <= 0:
            raise ValueError(f"margins must be strictly positive, got {self}")


@dataclass
class LossBreakdown:
    total: float
    components: dict = field(default_factory=dict)


def soft_indicator(code_of_generated, z):
    """exp(-count of mismatched bits); 1.0 iff the codes agree exactly.

    Differentiable: with straight-through codes the gradient reaches the
    generator through the encoder path.
    """
    a = code_of_generated if isinstance(code_of_generated, Tensor) else Tensor(
        np.asarray(code_of_generated, np.float32)
    )
    b = z if isinstance(z, Tensor) else Tensor(np.asarray(z, np.float32))
    if a.data.shape != b.data.shape:
        raise ValueError(f"soft_indicator: shape mismatch {a.data.shape} vs {b.data.shape}")
    return ops.exp(ops.neg(_negative_part_l1(ops.mul(a, b))))


def _negative_part_l1(s):
    """||[s]_-||_1 along the last axis: sum of |negative entries|."""
    return ops.sum(ops.relu(ops.neg(s)), axis=-1)


def generator_loss(model, z, noise, mode="train"):
    """Loss for one psi update, conditioned on fixed set codes z (N, d_z).

    Returns (scalar Tensor, LossBreakdown). mismatch_on defaults to the
    binarized generated code; set model.cfg.mismatch_prebinarize to penalize
    the pre-binarization pooled code instead.
    """
    z_arr = np.asarray(z.data if isinstance(z, Tensor) else z, np.float32)
    n_sets, n = np.asarray(noise).shape[:2]
    generated = model.generate(z_arr, noise, mode=mode)
    if not np.all(np.isfinite(generated.data)):
        raise FloatingPointError("generator_loss: non-finite generated images")

    z_const = Tensor(z_arr)
    if getattr(model.cfg, "mismatch_prebinarize", False):
        flat = ops.reshape(generated, (n_sets * n,) + generated.data.shape[2:])
        codes = model.image_codes(flat, mode)
        pooled = ops.sorted_mean(ops.reshape(codes, (n_sets, n, -1)), axis=1)
        mismatch = _negative_part_l1(ops.mul(pooled, z_const))
    else:
        gen_codes = model.encode_set(generated, mode)
        mismatch = _negative_part_l1(ops.mul(gen_codes, z_const))

    flat_imgs = ops.reshape(generated, (n_sets * n,) + generated.data.shape[2:])
    z_per_image = np.repeat(z_arr, n, axis=0)
    energies = model.image_energy(flat_imgs, Tensor(z_per_image), mode)
    set_energy = ops.sum(ops.reshape(energies, (n_sets, n)), axis=1)

    total = ops.mean(ops.add(mismatch, set_energy))
    breakdown = LossBreakdown(
        total=total.item(),
        components={
            "code_mismatch": float(mismatch.data.mean()),
            "energy_gen": float(set_energy.data.mean()),
        },
    )
    return total, breakdown


def model_loss(model, sets, noise, margins, mode="train"):
    """Loss for one theta update on a real batch (N, n, C, H, W).

    Generated sets come from the frozen generator conditioned on the batch
    codes, with the given fresh noise. The prior term sees the code through
    a stop gradient, so it can never move the encoder.
    """
    if not isinstance(margins, Margins):
        margins = Margins(*margins)
    x = sets if isinstance(sets, Tensor) else Tensor(np.asarray(sets, np.float32))
    n_sets, n = x.data.shape[:2]

    z = model.encode_set(x, mode)
    prior_nll = ops.neg(model.prior_log_prob(ops.stop_gradient(z)))

    gen = model.generate(z.data, noise, mode="frozen" if mode == "train" else mode)
    # real and generated images share one encoder/decoder pass; the samples
    # themselves are constants for the theta update
    z_per_image = _repeat_codes(z, 2 * n)
    both = ops.concat(
        [ops.reshape(x, (n_sets, -1)), Tensor(gen.data.reshape(n_sets, -1))], axis=1
    )
    both = ops.reshape(both, (n_sets * 2 * n,) + x.data.shape[2:])
    rec_all, unary_all = model.energy_parts(both, z_per_image, mode)
    rec_all = ops.reshape(rec_all, (n_sets, 2 * n))
    unary_all = ops.reshape(unary_all, (n_sets, 2 * n))

    recon_pos = ops.sum(ops.narrow(rec_all, 1, 0, n), axis=1)
    hinge_d0_pos = ops.sum(ops.relu(margins.gamma0 + ops.narrow(unary_all, 1, 0, n)), axis=1)
    hinge_recon_neg = ops.sum(ops.relu(margins.gamma1 - ops.narrow(rec_all, 1, n, n)), axis=1)
    hinge_d0_neg = ops.sum(ops.relu(margins.gamma0 - ops.narrow(unary_all, 1, n, n)), axis=1)

    per_set = prior_nll + recon_pos + hinge_d0_pos + hinge_recon_neg + hinge_d0_neg
    total = ops.mean(per_set)
    breakdown = LossBreakdown(
        total=total.item(),
        components={
            "prior_nll": float(prior_nll.data.mean()),
            "recon_pos": float(recon_pos.data.mean()),
            "hinge_d0_pos": float(hinge_d0_pos.data.mean()),
            "hinge_recon_neg": float(hinge_recon_neg.data.mean()),
            "hinge_d0_neg": float(hinge_d0_neg.data.mean()),
        },
    )
    return total, breakdown


def _repeat_codes(z, n):
    """(N, d_z) codes -> (N*n, d_z), one row per image, through the graph."""
    n_sets, d_z = z.data.shape
    expanded = ops.reshape(z, (n_sets, 1, d_z))
    tiled = ops.concat([expanded] * n, axis=1)
    return ops.reshape(tiled, (n_sets * n, d_z))
