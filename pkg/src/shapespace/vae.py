"""Variational autoencoder over normalized deformation features.

Fully-connected encoder and decoder (dense -> batch norm -> leaky ReLU
blocks). The encoder ends in two dense heads: an unbounded mean and a
deviation passed through a sigmoid scaled by ``sigma_max``. The decoder
output goes through tanh, so reconstructed features stay inside the
normalized range. The loss is a weighted feature MSE plus the KL
divergence against a diagonal Gaussian prior whose per-dimension
deviation (``prior_sigma``) is tunable: shrinking the first few entries
forces those latent dimensions to carry the dominant variation, which
is what the low-dimensional embedding rides on.

Training is plain minibatch ADAM with per-epoch reshuffling; every
random draw comes from counter-seeded generators, so a (seed, config)
pair reproduces checkpoints bit-for-bit on one platform.
"""

from contextlib import nullcontext
from dataclasses import dataclass, field
import logging

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from . import nn
from .container import ContainerError, read_container, write_container
from .corpus import FeatureNormalizer

__all__ = [
    "TrainingError",
    "TrainingConfig",
    "Vae",
    "Checkpoint",
    "kl_divergence",
    "reparameterize",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger("shapespace.vae")

_CHECKPOINT_VERSION = 1
_SIGMA_FLOOR = 1e-6


class TrainingError(RuntimeError):
    """Training diverged or was configured inconsistently."""


@dataclass(frozen=True)
class TrainingConfig:
    latent_dim: int = 128
    hidden: tuple = (1024, 512)
    recon_weight: float = 1e6
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 500
    seed: int = 0
    sigma_max: float = 2.0
    prior_sigma: tuple | None = None  # per-dimension prior deviation, ones when None

    def __post_init__(self):
        if self.recon_weight <= 0.0:
            raise ValueError("recon_weight must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch norm)")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        if self.sigma_max <= 0.0:
            raise ValueError("sigma_max must be positive")
        if not self.hidden:
            raise ValueError("at least one hidden layer is required")
        if self.prior_sigma is not None:
            ps = np.asarray(self.prior_sigma, dtype=float)
            if ps.shape != (self.latent_dim,) or np.any(ps <= 0.0):
                raise ValueError("prior_sigma must be latent_dim positive values")

    def prior_vector(self):
        if self.prior_sigma is None:
            return np.ones(self.latent_dim)
        return np.asarray(self.prior_sigma, dtype=float)


def kl_divergence(mu, sigma, prior_sigma):
    """KL divergence of N(mu, diag sigma^2) against N(0, diag prior^2),
    summed over dimensions. Batched inputs give one value per row."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    prior = np.asarray(prior_sigma, dtype=float)
    if np.any(sigma <= 0.0) or np.any(prior <= 0.0):
        raise ValueError("deviations must be strictly positive")
    val = np.log(prior / sigma) + (sigma**2 + mu**2) / (2.0 * prior**2) - 0.5
    return val.sum(axis=-1)


def reparameterize(mu, sigma, eps):
    """z = mu + sigma * eps; gradients flow to both mu and sigma."""
    return mu + sigma * eps


def _one_hot(conditions, vocab_sizes):
    conditions = np.atleast_2d(np.asarray(conditions, dtype=int))
    if conditions.shape[1] != len(vocab_sizes):
        raise ValueError(
            f"expected {len(vocab_sizes)} condition families, got {conditions.shape[1]}")
    blocks = []
    for fam, size in enumerate(vocab_sizes):
        idx = conditions[:, fam]
        if np.any(idx < 0) or np.any(idx >= size):
            raise ValueError(f"condition index out of range for family {fam}")
        block = np.zeros((conditions.shape[0], size))
        block[np.arange(conditions.shape[0]), idx] = 1.0
        blocks.append(block)
    return np.concatenate(blocks, axis=1)


class Vae:
    """Encoder/decoder parameter stacks for one feature width.

    ``condition_width`` is the total one-hot width appended to both the
    encoder input and the decoder input (0 for unconditional models).
    """

    def __init__(self, feature_width, config, condition_width=0, rng=None):
        if rng is None:
            rng = np.random.default_rng([config.seed, 1])
        self.feature_width = feature_width
        self.condition_width = condition_width
        self.config = config
        self.prior_sigma = config.prior_vector()
        d = config.latent_dim

        self.encoder = []
        w_in = feature_width + condition_width
        for i, h in enumerate(config.hidden):
            self.encoder += [
                nn.Dense(rng, w_in, h, name=f"enc{i}_dense", bias=False),
                nn.BatchNorm(h, name=f"enc{i}_bn"),
                nn.LeakyRelu(),
            ]
            w_in = h
        self.mu_head = nn.Dense(rng, w_in, d, name="mu_head")
        self.dev_head = nn.Dense(rng, w_in, d, name="dev_head")

        self.decoder = []
        w_in = d + condition_width
        for i, h in enumerate(reversed(config.hidden)):
            self.decoder += [
                nn.Dense(rng, w_in, h, name=f"dec{i}_dense", bias=False),
                nn.BatchNorm(h, name=f"dec{i}_bn"),
                nn.LeakyRelu(),
            ]
            w_in = h
        self.out_dense = nn.Dense(rng, w_in, feature_width, name="out_dense")
        self.out_act = nn.Tanh()

    # -- plumbing ---------------------------------------------------------

    def _layers(self):
        return [*self.encoder, self.mu_head, self.dev_head,
                *self.decoder, self.out_dense]

    def parameters(self):
        out = []
        for layer in self._layers():
            out.extend(layer.parameters())
        return out

    def param_arrays(self):
        return [arr for _, arr in self.parameters()]

    def grad_arrays(self):
        out = []
        for layer in self._layers():
            out.extend(layer.gradients())
        return out

    def state_tensors(self):
        out = []
        for layer in self._layers():
            if isinstance(layer, nn.BatchNorm):
                out.extend(layer.state_tensors())
        return out

    def _prepare(self, x, conditions, width, what):
        x, single = nn._as_batch(x)
        if x.shape[1] != width:
            raise ValueError(f"{what} width {x.shape[1]}, expected {width}")
        if self.condition_width:
            if conditions is None:
                raise ValueError("conditional model requires a condition")
            hot = _one_hot(conditions, self._vocab_sizes)
            if hot.shape[0] == 1 and x.shape[0] > 1:
                hot = np.repeat(hot, x.shape[0], axis=0)
            if hot.shape[0] != x.shape[0]:
                raise ValueError("condition batch does not match input batch")
            x = np.concatenate([x, hot], axis=1)
        elif conditions is not None:
            raise ValueError("model is unconditional, no condition accepted")
        return x, single

    @property
    def _vocab_sizes(self):
        return getattr(self, "vocab_sizes", (self.condition_width,) if self.condition_width else ())

    # -- forward ----------------------------------------------------------

    def encode_latent(self, features, conditions=None, training=False):
        """Posterior (mu, sigma) of normalized feature row(s)."""
        x, single = self._prepare(features, conditions, self.feature_width,
                                  "feature")
        for layer in self.encoder:
            x = layer.forward(x, training)
        mu = self.mu_head.forward(x, training)
        pre = self.dev_head.forward(x, training)
        self._dev_sig = _stable_sigmoid(pre)
        sigma_raw = self.config.sigma_max * self._dev_sig
        self._sigma_mask = sigma_raw >= _SIGMA_FLOOR
        sigma = np.maximum(sigma_raw, _SIGMA_FLOOR)
        if single:
            return mu[0], sigma[0]
        return mu, sigma

    def decode_latent(self, codes, conditions=None, training=False):
        """Normalized feature row(s) for latent code(s); entries in (-1, 1)."""
        x, single = self._prepare(codes, conditions, self.config.latent_dim,
                                  "latent code")
        for layer in self.decoder:
            x = layer.forward(x, training)
        y = self.out_act.forward(self.out_dense.forward(x, training), training)
        return y[0] if single else y

    # -- loss -------------------------------------------------------------

    def loss(self, batch, eps, conditions=None, training=True,
             with_grads=False):
        """Weighted reconstruction MSE plus mean KL of a feature batch.

        Returns (total, recon term, kl term); with ``with_grads`` the
        per-layer gradients are populated and returned as a flat list.
        """
        batch = np.asarray(batch, dtype=float)
        if batch.ndim != 2 or batch.shape[0] == 0:
            raise ValueError("batch must be a non-empty (B, K) array")
        b, k = batch.shape
        alpha = self.config.recon_weight
        mu, sigma = self.encode_latent(batch, conditions, training)
        z = reparameterize(mu, sigma, eps)
        fhat = self.decode_latent(z, conditions, training)
        diff = fhat - batch
        recon = alpha / (2.0 * b * k) * float((diff * diff).sum())
        kl_rows = kl_divergence(mu, sigma, self.prior_sigma)
        kl = float(kl_rows.mean())
        total = recon + kl
        if not np.isfinite(total):
            raise TrainingError("non-finite loss")
        if not with_grads:
            return total, recon, kl

        gfhat = (alpha / (b * k)) * diff
        gx = self.out_dense.backward(self.out_act.backward(gfhat))
        for layer in reversed(self.decoder):
            gx = layer.backward(gx)
        gz = gx[:, :self.config.latent_dim]
        prior2 = self.prior_sigma**2
        gmu = gz + mu / prior2 / b
        gsigma = gz * eps + (sigma / prior2 - 1.0 / sigma) / b
        gpre = gsigma * self._sigma_mask * self.config.sigma_max \
            * self._dev_sig * (1.0 - self._dev_sig)
        gh = self.mu_head.backward(gmu) + self.dev_head.backward(gpre)
        for layer in reversed(self.encoder):
            gh = layer.backward(gh)
        return (total, recon, kl), self.grad_arrays()


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Checkpoint:
    """Frozen training result: parameters, the feature normalizer they
    expect, the connectivity they are valid for, and the run config."""

    vae: Vae
    normalizer: FeatureNormalizer
    connectivity: bytes
    config: TrainingConfig
    epochs_completed: int
    vocabularies: list = field(default_factory=list)
    version: int = _CHECKPOINT_VERSION
    loss_history: list | None = None  # transient, not persisted

    @property
    def latent_dim(self):
        return self.config.latent_dim

    def condition_index(self, tokens):
        """Map condition token(s) to per-family vocabulary indices."""
        if not self.vocabularies:
            raise ValueError("model is unconditional, no condition accepted")
        if isinstance(tokens, str):
            tokens = [tokens]
        if len(tokens) != len(self.vocabularies):
            raise ValueError(
                f"expected {len(self.vocabularies)} condition tokens, got {len(tokens)}")
        idx = []
        for fam, (tok, vocab) in enumerate(zip(tokens, self.vocabularies)):
            if tok not in vocab:
                raise ValueError(f"unknown condition {tok!r} for family {fam}; "
                                 f"known: {vocab}")
            idx.append(vocab.index(tok))
        return tuple(idx)


def train(config, corpus, use_conditions=True, progress=None):
    """Train on the corpus train split; returns a Checkpoint.

    Corpus labels become one-hot condition inputs unless
    ``use_conditions`` is off. Shuffling and reparameterization noise
    are drawn from counter-seeded generators, so results are
    reproducible. A non-finite loss aborts with the offending epoch in
    the message.
    """
    feats = corpus.normalized_train_features()
    m, k = feats.shape
    if m < 2:
        raise TrainingError("need at least 2 training models")
    cond = corpus.train_condition_indices() if use_conditions else None
    vocabs = corpus.vocabularies if use_conditions else []
    cond_width = sum(len(v) for v in vocabs)
    model = Vae(k, config, condition_width=cond_width)
    model.vocab_sizes = tuple(len(v) for v in vocabs)
    adam = nn.Adam(model.param_arrays(), lr=config.learning_rate)
    history = []
    log_every = max(1, config.epochs // 20)
    # single-threaded BLAS inside the loop: the matrices are skinny, and
    # pool spin-waiting otherwise fights the fused optimizer kernel
    limits = threadpool_limits(limits=1, user_api="blas") \
        if threadpool_limits is not None else nullcontext()
    with limits:
        _train_loop(config, model, adam, feats, cond, history, log_every, progress)
    return Checkpoint(
        vae=model,
        normalizer=corpus.normalizer,
        connectivity=corpus.connectivity,
        config=config,
        epochs_completed=config.epochs,
        vocabularies=[list(v) for v in vocabs],
        loss_history=history,
    )


def _train_loop(config, model, adam, feats, cond, history, log_every, progress):
    m = feats.shape[0]
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, 2, epoch]).permutation(m)
        noise_rng = np.random.default_rng([config.seed, 3, epoch])
        tot = rec = kl = seen = 0
        for lo in range(0, m, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            if idx.size < 2:
                continue  # batch norm cannot see a single row
            eps = noise_rng.standard_normal((idx.size, config.latent_dim))
            batch_cond = cond[idx] if cond is not None else None
            try:
                parts, grads = model.loss(feats[idx], eps, batch_cond,
                                          training=True, with_grads=True)
                adam.step(grads)
            except (TrainingError, FloatingPointError) as exc:
                raise TrainingError(f"training diverged at epoch {epoch}: {exc}") from None
            tot += parts[0] * idx.size
            rec += parts[1] * idx.size
            kl += parts[2] * idx.size
            seen += idx.size
        history.append((tot / seen, rec / seen, kl / seen))
        if epoch % log_every == 0 or epoch == config.epochs - 1:
            log.info("epoch %d/%d loss=%.6g recon=%.6g kl=%.6g",
                     epoch + 1, config.epochs, *history[-1])
        if progress is not None:
            progress(epoch, history[-1])


def save_checkpoint(checkpoint, path):
    """Persist a checkpoint; save -> load -> save is byte-identical."""
    cfg = checkpoint.config
    manifest = {
        "kind": "checkpoint",
        "version": checkpoint.version,
        "feature_width": checkpoint.vae.feature_width,
        "latent_dim": cfg.latent_dim,
        "condition_width": checkpoint.vae.condition_width,
        "hidden": list(cfg.hidden),
        "sigma_max": cfg.sigma_max,
        "recon_weight": cfg.recon_weight,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "epochs_completed": checkpoint.epochs_completed,
        "connectivity": checkpoint.connectivity.hex(),
        "vocabularies": checkpoint.vocabularies,
        "normalizer_a": checkpoint.normalizer.a,
        "normalizer_eps": checkpoint.normalizer.eps,
    }
    tensors = {"prior_sigma": checkpoint.vae.prior_sigma,
               "normalizer.low": checkpoint.normalizer.low,
               "normalizer.high": checkpoint.normalizer.high}
    for name, arr in checkpoint.vae.parameters():
        tensors[name] = arr
    for name, arr in checkpoint.vae.state_tensors():
        tensors[name] = arr
    write_container(path, manifest, tensors)


def load_checkpoint(path):
    """Load a checkpoint; width mismatches and version skew are rejected."""
    manifest, tensors = read_container(path)
    if manifest.get("kind") != "checkpoint":
        raise ContainerError(f"{path}: not a checkpoint container")
    if manifest["version"] != _CHECKPOINT_VERSION:
        raise ContainerError(
            f"{path}: checkpoint version {manifest['version']} unsupported")
    prior = tensors["prior_sigma"]
    config = TrainingConfig(
        latent_dim=manifest["latent_dim"],
        hidden=tuple(manifest["hidden"]),
        recon_weight=manifest["recon_weight"],
        learning_rate=manifest["learning_rate"],
        batch_size=manifest["batch_size"],
        epochs=manifest["epochs"],
        seed=manifest["seed"],
        sigma_max=manifest["sigma_max"],
        prior_sigma=tuple(prior),
    )
    vocabs = [list(v) for v in manifest["vocabularies"]]
    model = Vae(manifest["feature_width"], config,
                condition_width=manifest["condition_width"],
                rng=np.random.default_rng(0))
    model.vocab_sizes = tuple(len(v) for v in vocabs)
    for name, arr in model.parameters():
        if name not in tensors:
            raise ContainerError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != arr.shape:
            raise ContainerError(f"{path}: tensor {name!r} has shape "
                                 f"{tensors[name].shape}, expected {arr.shape}")
        arr[...] = tensors[name]
    for name, arr in model.state_tensors():
        arr[...] = tensors[name]
    normalizer = FeatureNormalizer(
        low=tensors["normalizer.low"],
        high=tensors["normalizer.high"],
        a=manifest["normalizer_a"],
        eps=manifest["normalizer_eps"],
    )
    if normalizer.low.shape != (manifest["feature_width"],):
        raise ContainerError(f"{path}: normalizer length does not match feature width")
    return Checkpoint(
        vae=model,
        normalizer=normalizer,
        connectivity=bytes.fromhex(manifest["connectivity"]),
        config=config,
        epochs_completed=manifest["epochs_completed"],
        vocabularies=vocabs,
        version=manifest["version"],
    )
