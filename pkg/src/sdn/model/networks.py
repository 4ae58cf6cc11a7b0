"""The four jointly trained networks over the autodiff engine.

theta covers the image encoder c(.), the conditional decoder d(z, c(x)), the
unary energy head, and the autoregressive code prior; psi is the generator.
All convolutional / linear weights in the encoder, decoder and generator are
spectrally normalized; the unary head and the prior are plain.

Forward modes:
  "train"  - spectral-norm u advances one power iteration; generator batch
             standardization uses batch statistics and updates the running
             buffers.
  "frozen" - batch statistics without touching any persistent state (used
             when sampling from the frozen generator inside the theta step).
  "eval"   - running statistics, no state updates.
"""

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, init_spectral_state, no_grad, ops, spectral_normalize
from .made import build_made_masks, validate_codes

_MODES = ("train", "frozen", "eval")


@dataclass
class ModelConfig:
    image_size: int = 32
    d_z: int = 32
    dz_prime: int = 64
    width: int = 8
    prior_hidden: int = 64
    self_attention: bool = False
    seed: int = 0


class SdnModel:
    """Parameter container plus pure forward functions.

    cfg needs: image_size, d_z, dz_prime, width, prior_hidden,
    self_attention, seed (ModelConfig or any object carrying them).
    """

    def __init__(self, cfg):
        if cfg.image_size % 16 or cfg.image_size < 16:
            raise ValueError("image_size must be a multiple of 16, at least 16")
        self.cfg = cfg
        self.channels = 3
        w = cfg.width
        self.enc_ch = [w, 2 * w, 4 * w, 8 * w]
        self.base_spatial = cfg.image_size // 16
        self.params = {}
        self.buffers = {}
        self.sn = {}
        self.masks = build_made_masks(
            cfg.d_z, [cfg.prior_hidden] * 3, seed=[int(cfg.seed), 0x3A5D]
        )
        self._build(np.random.default_rng([int(cfg.seed), 0x11D]))

    # ------------------------------------------------------------ building

    def _add_param(self, name, arr):
        self.params[name] = Tensor(arr.astype(np.float32), requires_grad=True, name=name)

    def _add_conv(self, name, cin, cout, k, rng, sn=True):
        std = np.sqrt(1.0 / (cin * k * k))
        self._add_param(f"{name}.w", rng.standard_normal((cout, cin, k, k)) * std)
        self._add_param(f"{name}.b", np.zeros(cout))
        if sn:
            self.sn[f"{name}.w"] = init_spectral_state(cout, rng)

    def _add_linear(self, name, din, dout, rng, sn=True):
        std = np.sqrt(1.0 / din)
        self._add_param(f"{name}.w", rng.standard_normal((dout, din)) * std)
        self._add_param(f"{name}.b", np.zeros(dout))
        if sn:
            self.sn[f"{name}.w"] = init_spectral_state(dout, rng)

    def _add_bn(self, name, ch):
        self._add_param(f"{name}.gamma", np.ones(ch))
        self._add_param(f"{name}.beta", np.zeros(ch))
        self.buffers[f"{name}.mean"] = np.zeros(ch, np.float32)
        self.buffers[f"{name}.var"] = np.ones(ch, np.float32)

    def _add_attention(self, name, ch, rng):
        cq = max(1, ch // 8)
        self._add_conv(f"{name}.q", ch, cq, 1, rng)
        self._add_conv(f"{name}.k", ch, cq, 1, rng)
        self._add_conv(f"{name}.v", ch, ch, 1, rng)
        self._add_param(f"{name}.gamma", np.zeros(1))

    def _build(self, rng):
        cfg = self.cfg
        chs = self.enc_ch
        s = self.base_spatial
        # encoder c(x)
        prev = self.channels
        for i, ch in enumerate(chs, 1):
            self._add_conv(f"enc.conv{i}", prev, ch, 3, rng)
            prev = ch
        if cfg.self_attention:
            self._add_attention("enc.attn", chs[1], rng)
        self._add_linear("enc.head", chs[3] * s * s, cfg.d_z, rng)
        # generator G(z, z') and decoder d(z, c(x)); same ladder, separate
        # weights; the last upsample conv produces RGB directly
        for stack, din in (("gen", cfg.d_z + cfg.dz_prime), ("dec", 2 * cfg.d_z)):
            self._add_linear(f"{stack}.head", din, chs[3] * s * s, rng)
            ladder = [chs[3], chs[2], chs[1], chs[0]]
            for i in range(3):
                self._add_conv(f"{stack}.conv{i + 1}", ladder[i], ladder[i + 1], 3, rng)
            self._add_conv(f"{stack}.out", chs[0], self.channels, 3, rng)
        if cfg.self_attention:
            self._add_attention("gen.attn", chs[1], rng)
        for i in range(1, 4):
            self._add_bn(f"gen.bn{i}", [chs[2], chs[1], chs[0]][i - 1])
        # unary energy head d0: two-layer relu MLP with d_z hidden units
        self._add_linear("d0.fc1", cfg.d_z, cfg.d_z, rng, sn=False)
        self._add_linear("d0.fc2", cfg.d_z, 1, rng, sn=False)
        # masked autoregressive prior
        sizes = [cfg.d_z] + [cfg.prior_hidden] * 3 + [cfg.d_z]
        for i in range(4):
            self._add_linear(f"prior.fc{i + 1}", sizes[i], sizes[i + 1], rng, sn=False)

    # ------------------------------------------------------- parameter sets

    def theta_params(self):
        return {
            n: p
            for n, p in self.params.items()
            if n.startswith(("enc.", "dec.", "d0.", "prior."))
        }

    def psi_params(self):
        return {n: p for n, p in self.params.items() if n.startswith("gen.")}

    # ------------------------------------------------------------ forwards

    def _weight(self, name, mode):
        w = self.params[f"{name}.w"]
        state = self.sn.get(f"{name}.w")
        if state is None:
            return w
        return spectral_normalize(w, state, iters=1, update=(mode == "train"))

    def _conv(self, name, x, stride, mode):
        y = ops.conv2d(x, self._weight(name, mode), stride=stride, pad=1)
        return ops.bias_add_nchw(y, self.params[f"{name}.b"])

    def _linear(self, name, x, mode):
        return ops.linear(x, self._weight(name, mode), self.params[f"{name}.b"])

    def _attention(self, name, x, mode):
        b, c, h, w = x.data.shape
        cq = self.params[f"{name}.q.w"].data.shape[0]
        q = self._conv_1x1(f"{name}.q", x, mode)
        k = self._conv_1x1(f"{name}.k", x, mode)
        v = self._conv_1x1(f"{name}.v", x, mode)
        qf = ops.transpose(ops.reshape(q, (b, cq, h * w)), (0, 2, 1))
        kf = ops.reshape(k, (b, cq, h * w))
        attn = ops.softmax(ops.matmul(qf, kf), axis=-1)  # (b, hw, hw), rows sum to 1
        vf = ops.reshape(v, (b, c, h * w))
        out = ops.matmul(vf, ops.transpose(attn, (0, 2, 1)))
        out = ops.reshape(out, (b, c, h, w))
        gamma = ops.reshape(self.params[f"{name}.gamma"], (1, 1, 1, 1))
        return ops.add(x, ops.mul(gamma, out))

    def _conv_1x1(self, name, x, mode):
        y = ops.conv2d(x, self._weight(name, mode), stride=1, pad=0)
        return ops.bias_add_nchw(y, self.params[f"{name}.b"])

    def image_codes(self, x, mode="train"):
        """c(x): dense per-image code, (B, d_z)."""
        _check_mode(mode)
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, np.float32))
        for i in range(1, 5):
            h = ops.leaky_relu(self._conv(f"enc.conv{i}", h, 2, mode), alpha=0.1)
            if i == 2 and self.cfg.self_attention:
                h = self._attention("enc.attn", h, mode)
        b = h.data.shape[0]
        flat = ops.reshape(h, (b, self.enc_ch[3] * self.base_spatial**2))
        return self._linear("enc.head", flat, mode)

    def encode_set(self, sets, mode="train"):
        """Binary set codes for (N, n, C, H, W) input; exactly permutation
        invariant because per-image codes are combined with an order-free
        mean before binarization."""
        x = sets if isinstance(sets, Tensor) else Tensor(np.asarray(sets, np.float32))
        if x.data.ndim != 5:
            raise ValueError(f"encode_set: want (N, n, C, H, W), got {x.data.shape}")
        n_sets, n = x.data.shape[:2]
        if n < 1:
            raise ValueError("encode_set: empty set")
        flat = ops.reshape(x, (n_sets * n,) + x.data.shape[2:])
        codes = self.image_codes(flat, mode)
        pooled = ops.sorted_mean(ops.reshape(codes, (n_sets, n, self.cfg.d_z)), axis=1)
        return ops.binarize_st(pooled)

    def _ladder(self, stack, h, mode, with_bn):
        for i in range(1, 4):
            h = ops.upsample_nearest(h, 2)
            h = self._conv(f"{stack}.conv{i}", h, 1, mode)
            if with_bn:
                h = ops.batch_standardize(
                    h,
                    self.params[f"{stack}.bn{i}.gamma"],
                    self.params[f"{stack}.bn{i}.beta"],
                    self.buffers[f"{stack}.bn{i}.mean"] if mode != "frozen" else None,
                    self.buffers[f"{stack}.bn{i}.var"] if mode != "frozen" else None,
                    training=(mode in ("train", "frozen")),
                    momentum=0.9,
                )
            h = ops.relu(h)
            if i == 2 and with_bn and self.cfg.self_attention:
                h = self._attention(f"{stack}.attn", h, mode)
        h = ops.upsample_nearest(h, 2)
        return ops.tanh(self._conv(f"{stack}.out", h, 1, mode))

    def decode(self, set_codes, image_codes, mode="train"):
        """d(z, c(x)): reconstruction from the binary set code and the dense
        image code, (B, C, H, W)."""
        _check_mode(mode)
        h = ops.concat([set_codes, image_codes], axis=1)
        h = self._linear("dec.head", h, mode)
        b = h.data.shape[0]
        s = self.base_spatial
        h = ops.reshape(h, (b, self.enc_ch[3], s, s))
        return self._ladder("dec", h, mode, with_bn=False)

    def unary_energy(self, image_codes, mode="train"):
        """d0(c(x)): scalar per image, (B,)."""
        h = ops.relu(self._linear("d0.fc1", image_codes, mode))
        out = self._linear("d0.fc2", h, mode)
        return ops.reshape(out, (out.data.shape[0],))

    def energy_parts(self, x, set_codes_per_image, mode="train"):
        """Reconstruction and unary terms of the image energy, each (B,)."""
        _check_mode(mode)
        xt = x if isinstance(x, Tensor) else Tensor(np.asarray(x, np.float32))
        if xt.data.shape[0] != set_codes_per_image.data.shape[0]:
            raise ValueError(
                f"energy_parts: {xt.data.shape[0]} images vs "
                f"{set_codes_per_image.data.shape[0]} codes"
            )
        cx = self.image_codes(xt, mode)
        rec = self.decode(set_codes_per_image, cx, mode)
        diff = ops.sub(xt, rec)
        rec_err = ops.sum(ops.mul(diff, diff), axis=(1, 2, 3))
        return rec_err, self.unary_energy(cx, mode)

    def image_energy(self, x, set_codes_per_image, mode="train"):
        """E(x, z) = ||x - d(z, c(x))||^2 + d0(c(x)), (B,)."""
        rec_err, unary = self.energy_parts(x, set_codes_per_image, mode)
        return ops.add(rec_err, unary)

    def generate(self, set_codes, noise, mode="train"):
        """G(z, z'): (N, n, C, H, W) images in [-1, 1].

        set_codes (N, d_z) and noise (N, n, dz') enter as constants; only
        generator parameters carry gradients out of this call.
        """
        _check_mode(mode)
        z = np.asarray(set_codes.data if isinstance(set_codes, Tensor) else set_codes)
        zn = np.asarray(noise, np.float32)
        if zn.ndim != 3 or zn.shape[2] != self.cfg.dz_prime:
            raise ValueError(f"generate: noise must be (N, n, {self.cfg.dz_prime})")
        if zn.shape[0] != z.shape[0]:
            raise ValueError("generate: set_codes and noise disagree on N")
        n_sets, n = zn.shape[:2]
        z_rep = np.repeat(z[:, None, :], n, axis=1).astype(np.float32)
        flat_in = Tensor(
            np.concatenate([z_rep, zn], axis=2).reshape(n_sets * n, -1)
        )
        h = self._linear("gen.head", flat_in, mode)
        s = self.base_spatial
        h = ops.reshape(h, (n_sets * n, self.enc_ch[3], s, s))
        img = self._ladder("gen", h, mode, with_bn=True)
        return ops.reshape(img, (n_sets, n) + img.data.shape[1:])

    # --------------------------------------------------------------- prior

    def prior_logits(self, codes):
        """Autoregressive logits (N, d_z); logit i sees only bits < i."""
        h = codes if isinstance(codes, Tensor) else Tensor(np.asarray(codes, np.float32))
        for i, mask in enumerate(self.masks.hidden, 1):
            w = ops.mul(self.params[f"prior.fc{i}.w"], Tensor(mask))
            h = ops.relu(ops.linear(h, w, self.params[f"prior.fc{i}.b"]))
        w = ops.mul(self.params["prior.fc4.w"], Tensor(self.masks.output))
        return ops.linear(h, w, self.params["prior.fc4.b"])

    def prior_log_prob(self, codes):
        """log p(z) per row, (N,), for codes in {-1, +1}^(N, d_z)."""
        arr = validate_codes(codes.data if isinstance(codes, Tensor) else codes)
        ct = codes if isinstance(codes, Tensor) else Tensor(arr.astype(np.float32))
        logits = self.prior_logits(ct)
        # Bernoulli with bit -1 -> 0, +1 -> 1: ll = -softplus(-bit * logit)
        ll = ops.neg(ops.softplus(ops.neg(ops.mul(ct, logits))))
        return ops.sum(ll, axis=1)

    def prior_sample(self, count, rng):
        """Ancestral sampling in natural bit order, (count, d_z) in {-1,+1}."""
        codes = np.zeros((count, self.cfg.d_z), np.float32)
        with no_grad():
            for i in range(self.cfg.d_z):
                logits = self.prior_logits(Tensor(codes)).data[:, i]
                p = 1.0 / (1.0 + np.exp(-logits))
                codes[:, i] = np.where(rng.random(count) < p, 1.0, -1.0)
        return codes

    # --------------------------------------------------------- state access

    def state_tensors(self):
        """Everything that must round-trip through a checkpoint."""
        out = {f"param.{n}": p.data for n, p in self.params.items()}
        out.update({f"buf.{n}": b for n, b in self.buffers.items()})
        out.update({f"sn.{n}": s.u for n, s in self.sn.items()})
        return out

    def load_state_tensors(self, tensors):
        for n, p in self.params.items():
            p.data = tensors[f"param.{n}"].astype(np.float32).reshape(p.data.shape)
        for n in self.buffers:
            self.buffers[n] = tensors[f"buf.{n}"].astype(np.float32).reshape(
                self.buffers[n].shape
            )
        for n, s in self.sn.items():
            s.u = tensors[f"sn.{n}"].astype(np.float32).reshape(s.u.shape)


def _check_mode(mode):
    if mode not in _MODES:
        raise ValueError(f"unknown forward mode {mode!r}")
