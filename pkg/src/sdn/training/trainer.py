"""Alternating optimization of the generator and the model parameters.

Each train step runs exactly one generator (psi) Adam update from the
generator loss, then exactly one theta update from the model loss. All
randomness comes from per-iteration streams derived from (seed, iteration),
so a run resumed from a checkpoint replays the exact tail of an
uninterrupted run, bit for bit.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import AdamState, adam_step, backward, no_grad
from ..data import DatasetDescriptor, open_dataset
from ..losses import Margins, generator_loss, model_loss
from ..model import SdnModel
from .checkpoint import load_checkpoint, save_checkpoint
from .config import config_to_text, parse_config_text

METRICS_FIELDS = [
    "iter",
    "loss_theta",
    "loss_psi",
    "recon_pos",
    "hinge_d0_pos",
    "hinge_recon_neg",
    "hinge_d0_neg",
    "prior_nll",
    "code_mismatch",
    "code_match_rate",
]


@dataclass
class MetricsRow:
    iter: int
    loss_theta: float
    loss_psi: float
    recon_pos: float
    hinge_d0_pos: float
    hinge_recon_neg: float
    hinge_d0_neg: float
    prior_nll: float
    code_mismatch: float
    code_match_rate: float

    def to_csv(self):
        return ",".join(repr(getattr(self, f)) for f in METRICS_FIELDS)

    def finite(self):
        return all(
            np.isfinite(getattr(self, f)) for f in METRICS_FIELDS if f != "iter"
        )


class TrainingHalted(RuntimeError):
    pass


def descriptor_from_config(cfg):
    return DatasetDescriptor(
        source=cfg.data_source,
        identities=cfg.identities,
        views=cfg.views,
        train_fraction=cfg.train_fraction,
        seed=cfg.seed,
        image_size=cfg.image_size,
        root=cfg.data_dir,
    )


class Trainer:
    def __init__(self, cfg, dataset=None):
        cfg.validate()
        self.cfg = cfg
        self.model = SdnModel(cfg)
        self.dataset = dataset if dataset is not None else open_dataset(descriptor_from_config(cfg))
        self.margins = Margins(cfg.gamma0, cfg.gamma1)
        self.opt_g = AdamState(lr=cfg.lr_g, beta1=cfg.beta1, beta2=cfg.beta2)
        self.opt_d = AdamState(lr=cfg.lr_d, beta1=cfg.beta1, beta2=cfg.beta2)
        self.iteration = 0

    # --------------------------------------------------------------- steps

    def iter_rng(self, iteration):
        return np.random.default_rng([int(self.cfg.seed), 0x17E4, int(iteration)])

    def sample_batch(self, rng):
        return self.dataset.sample_set_batch(
            "train", self.cfg.batch_sets, self.cfg.set_size, rng
        )

    def _noise(self, rng):
        shape = (self.cfg.batch_sets, self.cfg.set_size, self.cfg.dz_prime)
        return rng.standard_normal(shape).astype(np.float32)

    def psi_step(self, batch, rng):
        """One generator update; theta parameters are left untouched."""
        with no_grad():
            z = self.model.encode_set(batch.images, mode="eval")
        total, bd = generator_loss(self.model, z.data, self._noise(rng), mode="train")
        psi = self.model.psi_params()
        table = backward(total, wrt=list(psi.values()))
        adam_step(psi, {n: table[id(p)] for n, p in psi.items()}, self.opt_g)
        for p in psi.values():
            p.grad = None
        return bd

    def theta_step(self, batch, rng):
        """One encoder/decoder/unary/prior update; psi left untouched."""
        total, bd = model_loss(
            self.model, batch.images, self._noise(rng), self.margins, mode="train"
        )
        theta = self.model.theta_params()
        table = backward(total, wrt=list(theta.values()))
        adam_step(theta, {n: table[id(p)] for n, p in theta.items()}, self.opt_d)
        for p in theta.values():
            p.grad = None
        return bd

    def train_step(self, batch, rng):
        bd_psi = self.psi_step(batch, rng)
        bd_theta = self.theta_step(batch, rng)
        self.iteration += 1
        mismatch = bd_psi.components["code_mismatch"]
        row = MetricsRow(
            iter=self.iteration,
            loss_theta=bd_theta.total,
            loss_psi=bd_psi.total,
            recon_pos=bd_theta.components["recon_pos"],
            hinge_d0_pos=bd_theta.components["hinge_d0_pos"],
            hinge_recon_neg=bd_theta.components["hinge_recon_neg"],
            hinge_d0_neg=bd_theta.components["hinge_d0_neg"],
            prior_nll=bd_theta.components["prior_nll"],
            code_mismatch=mismatch,
            code_match_rate=1.0 - mismatch / self.cfg.d_z,
        )
        return row

    # --------------------------------------------------------------- state

    def state_tensors(self):
        out = self.model.state_tensors()
        for tag, opt in (("adam_g", self.opt_g), ("adam_d", self.opt_d)):
            for name, arr in opt.m.items():
                out[f"{tag}.m.{name}"] = arr
            for name, arr in opt.v.items():
                out[f"{tag}.v.{name}"] = arr
        return out

    def save(self, path):
        if self.opt_g.t not in (0, self.iteration) or self.opt_d.t not in (0, self.iteration):
            raise AssertionError("optimizer step counts diverged from iteration")
        save_checkpoint(
            path,
            self.state_tensors(),
            config_to_text(self.cfg),
            seed=self.cfg.seed,
            step=self.iteration,
        )

    def load_state(self, tensors, step):
        self.model.load_state_tensors(tensors)
        for tag, opt in (("adam_g", self.opt_g), ("adam_d", self.opt_d)):
            prefix_m = f"{tag}.m."
            prefix_v = f"{tag}.v."
            opt.m = {
                n[len(prefix_m):]: tensors[n].copy() for n in tensors if n.startswith(prefix_m)
            }
            opt.v = {
                n[len(prefix_v):]: tensors[n].copy() for n in tensors if n.startswith(prefix_v)
            }
            opt.t = step
        self.iteration = step


_RESUME_MUTABLE = {"iters", "out_dir", "log_interval", "checkpoint_interval"}


def _check_resume_config(embedded, cfg):
    for f in dataclasses.fields(cfg):
        if f.name in _RESUME_MUTABLE:
            continue
        if getattr(embedded, f.name) != getattr(cfg, f.name):
            raise ValueError(
                f"resume config mismatch on {f.name!r}: checkpoint has "
                f"{getattr(embedded, f.name)!r}, config has {getattr(cfg, f.name)!r}"
            )


def run_training(cfg, resume=None):
    """Train for cfg.iters steps; returns the final checkpoint path."""
    cfg.validate()
    out = Path(cfg.out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"

    trainer = Trainer(cfg)
    if _dataset_size(trainer.dataset, "train") == 0:
        raise ValueError("dataset has no training identities; refusing to start")

    if resume is not None:
        tensors, config_text, seed, step = load_checkpoint(resume)
        embedded = parse_config_text(config_text)
        _check_resume_config(embedded, cfg)
        if seed != cfg.seed:
            raise ValueError(f"checkpoint seed {seed} != config seed {cfg.seed}")
        trainer.load_state(tensors, step)

    start = trainer.iteration
    mode = "a" if (resume is not None and metrics_path.exists()) else "w"
    last_good = ckpt_dir / f"ckpt-{start:06d}.sdn"
    trainer.save(last_good)

    with open(metrics_path, mode) as metrics:
        if mode == "w":
            metrics.write(",".join(METRICS_FIELDS) + "\n")
            metrics.flush()
        for i in range(start, cfg.iters):
            rng = trainer.iter_rng(i)
            batch = trainer.sample_batch(rng)
            try:
                row = trainer.train_step(batch, rng)
            except FloatingPointError as exc:
                raise TrainingHalted(
                    f"non-finite loss at iteration {i + 1}; "
                    f"last good checkpoint: {last_good}"
                ) from exc
            if not row.finite():
                raise TrainingHalted(
                    f"non-finite metrics at iteration {row.iter}; "
                    f"last good checkpoint: {last_good}"
                )
            if row.iter % cfg.log_interval == 0:
                metrics.write(row.to_csv() + "\n")
                metrics.flush()
            if cfg.checkpoint_interval and row.iter % cfg.checkpoint_interval == 0:
                last_good = ckpt_dir / f"ckpt-{row.iter:06d}.sdn"
                trainer.save(last_good)

    final = ckpt_dir / "ckpt-final.sdn"
    trainer.save(final)
    return final


def _dataset_size(dataset, split):
    return len(dataset.train_ids if split == "train" else dataset.test_ids)


def load_trainer(ckpt_path):
    """Rebuild a Trainer (model + optimizer state) from a checkpoint."""
    tensors, config_text, seed, step = load_checkpoint(ckpt_path)
    cfg = parse_config_text(config_text)
    trainer = Trainer(cfg)
    trainer.load_state(tensors, step)
    return trainer
