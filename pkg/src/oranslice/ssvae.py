"""Semi-supervised VAE allocator with a contrastive fine-tuning stage.

The encoder maps standardised log channel gains to a Gaussian latent
(mu, logvar); the decoder reconstructs the input from a latent sample; the
head regresses the normalised allocation target from mu. Training runs two
stages: ELBO plus supervised regression, then contrastive fine-tuning with
the supervised term kept at reduced weight.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import ChannelTensor, generate_channel, generate_contrastive_pair
from .config import ConfigError, NetworkConfig
from .dataset import Dataset
from .metrics import cosine, mae, r2
from .nn import (AdamState, DenseNet, backward, forward, kl_gaussian, kl_gaussian_grad,
                 load_checkpoint, mse, reparameterize, reparameterize_backward,
                 save_checkpoint, sigmoid)
from .system import Allocation, Violation, check_feasible, label_length

log = logging.getLogger(__name__)

_LOG_FLOOR = 1e-12
_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class SsvaeHyper:
    lr: float = 1e-3
    beta1: float = 0.99
    beta2: float = 0.99
    weight_decay: float = 0.9
    apply_weight_decay: bool = False
    epochs: int = 40
    stage_a_epochs: int = 30
    batch_size: int = 128
    dropout: float = 0.3
    encoder_dropout: bool = False
    val_fraction: float = 0.2
    latent_dim: int = 20
    encoder_hidden: tuple[int, ...] = (128, 128, 64, 64)
    literal_encoder_depth: bool = False
    decoder_hidden: tuple[int, ...] = (64, 128)
    head_hidden: tuple[int, ...] = (128, 128)
    activation: str = "tanh"
    temperature: float = 0.25
    lam_rec: float = 1.0
    lam_kl: float = 0.1
    lam_sup: float = 10.0
    lam_con: float = 1.0
    stage_b_sup_scale: float = 0.5
    pair_corr: float = 0.9
    input_mode: str = "full"
    seed: int = 0

    def __post_init__(self):
        for name in ("encoder_hidden", "decoder_hidden", "head_hidden"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.activation not in ("relu", "leaky_relu", "tanh"):
            raise ConfigError(f"activation must be relu, leaky_relu or tanh, got {self.activation!r}")
        if self.input_mode not in ("full", "ub_mean"):
            raise ConfigError(f"input_mode must be 'full' or 'ub_mean', got {self.input_mode!r}")
        if not 0 <= self.stage_a_epochs <= self.epochs:
            raise ConfigError("stage_a_epochs must lie in [0, epochs]")
        if self.batch_size < 1 or self.latent_dim < 1:
            raise ConfigError("batch_size and latent_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if min(self.lam_rec, self.lam_kl, self.lam_sup, self.lam_con) < 0:
            raise ConfigError("loss weights must be >= 0")

    @classmethod
    def from_overrides(cls, overrides: dict | None = None) -> "SsvaeHyper":
        overrides = dict(overrides or {})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise ConfigError(f"unknown hyperparameter: {', '.join(unknown)}")
        return cls(**overrides)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @property
    def loss_mix(self) -> dict:
        return {"lam_rec": self.lam_rec, "lam_kl": self.lam_kl, "lam_sup": self.lam_sup,
                "lam_con": self.lam_con, "stage_b_sup_scale": self.stage_b_sup_scale}


class PredictionRaw(NamedTuple):
    p_hat: np.ndarray          # (U, B, M, S), fraction of P_s^max
    alpha_logits: np.ndarray   # (U, B, S)
    beta_logits: np.ndarray    # (U, B, M, S)


def log_features(gains, mode: str = "full") -> np.ndarray:
    """(N, U, B, M, S) gains to unstandardised log features."""
    g = np.asarray(gains, dtype=float)
    if mode == "ub_mean":
        g = g.mean(axis=(3, 4))
    return np.log(np.maximum(g.reshape(g.shape[0], -1), _LOG_FLOOR))


def info_nce(anchors, positives, temperature: float, negatives=None):
    """InfoNCE on already-normalised embeddings.

    Row i scores anchor i against every positive (column i is its match) and
    every extra negative. Returns (loss, d_anchors, d_positives, d_negatives).
    """
    a = np.asarray(anchors, dtype=float)
    p = np.asarray(positives, dtype=float)
    n = a.shape[0]
    if n < 2 and negatives is None:
        raise ValueError("contrastive loss needs a batch of at least two")
    cols = p if negatives is None else np.vstack([p, negatives])
    logits = a @ cols.T / temperature
    shift = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - shift)
    lse = np.log(e.sum(axis=1)) + shift[:, 0]
    loss = float(np.mean(lse - logits[np.arange(n), np.arange(n)]))
    dlog = e / e.sum(axis=1, keepdims=True)
    dlog[np.arange(n), np.arange(n)] -= 1.0
    dlog /= n * temperature
    d_a = dlog @ cols
    d_cols = dlog.T @ a
    d_neg = None if negatives is None else d_cols[n:]
    return loss, d_a, d_cols[:n], d_neg


def _normalize(v):
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    return v / norm, norm


def _normalize_backward(de, e, norm):
    return (de - e * np.sum(e * de, axis=1, keepdims=True)) / norm


class SsvaeModel:
    """Encoder, decoder and head networks plus the input standardiser."""

    NETS = ("encoder", "decoder", "head")

    def __init__(self, cfg: NetworkConfig, hyper: SsvaeHyper | None = None, rng=0,
                 feat_mean=None, feat_std=None):
        self.cfg = cfg
        self.hyper = hyper or SsvaeHyper()
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        hp = self.hyper
        u, b, m, s = cfg.shape
        self.input_dim = u * b if hp.input_mode == "ub_mean" else u * b * m * s
        self.output_dim = label_length(cfg)
        enc_hidden = (64,) * 20 if hp.literal_encoder_depth else hp.encoder_hidden
        lat = hp.latent_dim

        def build(sizes):
            acts = [hp.activation] * (len(sizes) - 2) + ["linear"]
            return DenseNet.build(list(sizes), acts, rng)

        self.encoder = build((self.input_dim, *enc_hidden, 2 * lat))
        self.decoder = build((lat, *hp.decoder_hidden, self.input_dim))
        self.head = build((lat, *hp.head_hidden, self.output_dim))
        self.feat_mean = np.zeros(self.input_dim) if feat_mean is None else np.asarray(feat_mean)
        self.feat_std = np.ones(self.input_dim) if feat_std is None else np.asarray(feat_std)

    # -- inputs ---------------------------------------------------------------
    def fit_standardizer(self, gains) -> None:
        f = log_features(gains, self.hyper.input_mode)
        self.feat_mean = f.mean(axis=0)
        self.feat_std = np.maximum(f.std(axis=0), _STD_FLOOR)

    def features(self, gains) -> np.ndarray:
        g = np.asarray(gains, dtype=float)
        if g.ndim == 4:
            g = g[None]
        if g.shape[1:] != self.cfg.shape:
            raise ValueError(f"channel shape {g.shape[1:]} != {self.cfg.shape}")
        return (log_features(g, self.hyper.input_mode) - self.feat_mean) / self.feat_std

    def nets(self) -> dict[str, DenseNet]:
        return {name: getattr(self, name) for name in self.NETS}

    def params(self) -> list[np.ndarray]:
        return [p for net in self.nets().values() for p in net.params()]

    # -- forward pieces ---------------------------------------------------------
    def _check_x(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} input features, got {x.shape[1]}")
        return x

    def encode(self, x, train: bool = False, rng=None, drop_rng=None):
        """(mu, logvar, z); z is a reparameterised sample in training, mu otherwise."""
        mu, logvar, _ = self._encode(self._check_x(x), train, drop_rng)
        if train and rng is not None:
            z, _ = reparameterize(mu, logvar, rng)
        else:
            z = mu
        return mu, logvar, z

    def _encode(self, x, train, drop_rng):
        # dropout on the encoder feeds noise straight into mu, which the head reads
        rate = self.hyper.dropout if train and self.hyper.encoder_dropout else 0.0
        out, cache = forward(self.encoder, x, train, rate, drop_rng)
        lat = self.hyper.latent_dim
        return out[:, :lat], out[:, lat:], cache

    def _enc_backward(self, cache, dmu, dlogvar):
        grads, _ = backward(self.encoder, cache, np.hstack([dmu, dlogvar]))
        return grads

    def predict_vector(self, x) -> np.ndarray:
        """Eval-mode head output in target space (sigmoid of the logits)."""
        return sigmoid(self.predict_logits(x))

    def predict_logits(self, x) -> np.ndarray:
        mu, _, _ = self._encode(self._check_x(x), False, None)
        return forward(self.head, mu)[0]

    # -- losses with gradients -------------------------------------------------
    def elbo_and_grads(self, x, rng=None, train: bool = False, drop_rng=None):
        """lam_rec * MSE(decoder(z), x) + lam_kl * KL; z = mu when ``rng`` is None."""
        hp = self.hyper
        x = self._check_x(x)
        mu, logvar, ecache = self._encode(x, train, drop_rng)
        if rng is None:
            z, eps = mu, np.zeros_like(mu)
        else:
            z, eps = reparameterize(mu, logvar, rng)
        recon, dcache = forward(self.decoder, z, train, hp.dropout if train else 0.0, drop_rng)
        rec, drec = mse(recon, x)
        kl = kl_gaussian(mu, logvar)
        dec_grads, dz = backward(self.decoder, dcache, hp.lam_rec * drec)
        dmu, dlogvar = reparameterize_backward(dz, logvar, eps)
        if rng is None:
            dlogvar = np.zeros_like(logvar)
        kmu, klv = kl_gaussian_grad(mu, logvar)
        enc_grads = self._enc_backward(ecache, dmu + hp.lam_kl * kmu, dlogvar + hp.lam_kl * klv)
        total = hp.lam_rec * rec + hp.lam_kl * kl
        return total, {"encoder": enc_grads, "decoder": dec_grads}, {"rec": rec, "kl": kl}

    def supervised_and_grads(self, x, gamma, train: bool = False, drop_rng=None):
        """Unweighted MSE between sigmoid(head(mu)) and the target."""
        x = self._check_x(x)
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        if gamma.shape != (x.shape[0], self.output_dim):
            raise ValueError(f"targets must have shape {(x.shape[0], self.output_dim)}")
        if x.shape[0] == 0:
            raise ValueError("supervised loss needs a nonempty labelled batch")
        mu, logvar, ecache = self._encode(x, train, drop_rng)
        logits, hcache = forward(self.head, mu, train, self.hyper.dropout if train else 0.0,
                                 drop_rng)
        y = sigmoid(logits)
        loss, dy = mse(y, gamma)
        head_grads, dmu = backward(self.head, hcache, dy * y * (1.0 - y))
        enc_grads = self._enc_backward(ecache, dmu, np.zeros_like(logvar))
        return loss, {"encoder": enc_grads, "head": head_grads}

    def contrastive_and_grads(self, x_anchor, x_pos, x_neg=None, train: bool = False,
                              drop_rng=None, temperature: float | None = None):
        """InfoNCE over L2-normalised mu embeddings with in-batch negatives."""
        tau = self.hyper.temperature if temperature is None else temperature
        xs = [self._check_x(x_anchor), self._check_x(x_pos)]
        if x_neg is not None:
            xs.append(self._check_x(x_neg))
        if xs[0].shape[0] < 2:
            raise ValueError("contrastive loss needs a batch of at least two")
        encoded = [self._encode(x, train, drop_rng) for x in xs]
        embs = [_normalize(mu) for mu, _, _ in encoded]
        loss, da, dp, dn = info_nce(embs[0][0], embs[1][0], tau,
                                    None if x_neg is None else embs[2][0])
        total = None
        for (mu, logvar, cache), (e, norm), de in zip(encoded, embs, (da, dp, dn)):
            g = self._enc_backward(cache, _normalize_backward(de, e, norm), np.zeros_like(logvar))
            total = g if total is None else [t + gi for t, gi in zip(total, g)]
        return loss, {"encoder": total}

    def loss_elbo(self, x, rng=None) -> float:
        return self.elbo_and_grads(x, rng)[0]

    def loss_supervised(self, x, gamma) -> float:
        return self.supervised_and_grads(x, gamma)[0]

    def loss_contrastive(self, x_anchor, x_pos, temperature: float | None = None) -> float:
        return self.contrastive_and_grads(x_anchor, x_pos, temperature=temperature)[0]

    def embed(self, x) -> np.ndarray:
        mu, _, _ = self._encode(self._check_x(x), False, None)
        return _normalize(mu)[0]

    # -- persistence -------------------------------------------------------------
    def save(self, path, extra_meta: dict | None = None) -> str:
        meta = {"kind": "ssvae", "config": self.cfg.to_dict(), "hyper": self.hyper.to_dict(),
                "loss_mix": self.hyper.loss_mix}
        meta.update(extra_meta or {})
        return save_checkpoint(path, self.nets(),
                               arrays={"feat_mean": self.feat_mean, "feat_std": self.feat_std},
                               meta=meta, step=int(meta.get("step", 0)))

    @classmethod
    def load(cls, path) -> "SsvaeModel":
        nets, arrays, header = load_checkpoint(path)
        meta = header["meta"]
        if meta.get("kind") != "ssvae":
            raise ValueError(f"{path} is not an SS-VAE checkpoint")
        model = cls(NetworkConfig.from_dict(meta["config"]), SsvaeHyper(**meta["hyper"]),
                    feat_mean=arrays["feat_mean"], feat_std=arrays["feat_std"])
        for name, net in nets.items():
            setattr(model, name, net)
        return model


def _merge(acc: dict, grads: dict, scale: float) -> None:
    for name, gs in grads.items():
        for k, g in enumerate(gs):
            acc[name][k] += scale * g


@dataclass
class TrainResult:
    model: SsvaeModel
    history: list[dict]
    optimizer_steps: int = 0
    val_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _pairs(gains, large, cfg, corr, rng):
    pos = np.empty_like(gains)
    neg = np.empty_like(gains)
    for i in range(len(gains)):
        pos[i] = generate_contrastive_pair(ChannelTensor(gains[i], large[i]), rng,
                                           "similar", corr).gains
        neg[i] = generate_channel(cfg, rng).gains
    return pos, neg


def train_ssvae(dataset: Dataset, hyper: SsvaeHyper | None = None, *,
                validation: Dataset | None = None) -> TrainResult:
    """Two-stage training; ``validation`` defaults to a held-out split of ``dataset``."""
    hp = hyper or SsvaeHyper()
    if dataset.n_labeled == 0:
        raise ValueError("training needs at least one labelled sample")
    if validation is None and hp.val_fraction > 0:
        n_val = int(round(hp.val_fraction * dataset.n_labeled))
        if 0 < n_val < dataset.n_labeled:
            dataset, validation = dataset.split(hp.val_fraction, hp.seed)
    cfg = dataset.cfg
    init_ss, shuffle_ss, drop_ss, noise_ss = np.random.SeedSequence(hp.seed).spawn(4)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    noise_rng = np.random.default_rng(noise_ss)

    model = SsvaeModel(cfg, hp, np.random.default_rng(init_ss))
    gains = np.concatenate([dataset.gains, dataset.unlabeled_gains])
    large = np.concatenate([dataset.large_scale, dataset.unlabeled_large_scale])
    model.fit_standardizer(gains)
    x_all = model.features(gains)
    gamma = dataset.labels
    n_lab, q = dataset.n_labeled, len(gains)
    x_val = model.features(validation.gains) if validation is not None else None

    adam = AdamState(lr=hp.lr, beta1=hp.beta1, beta2=hp.beta2,
                     weight_decay=hp.weight_decay if hp.apply_weight_decay else 0.0)
    params = model.params()
    use_elbo = hp.lam_rec > 0 or hp.lam_kl > 0
    history, steps = [], 0
    for epoch in range(hp.epochs):
        stage = "A" if epoch < hp.stage_a_epochs else "B"
        order = shuffle_rng.permutation(q)
        sums = dict(total=0.0, rec=0.0, kl=0.0, sup=0.0, con=0.0)
        n_batches = math.ceil(q / hp.batch_size)
        for k in range(n_batches):
            idx = order[k * hp.batch_size:(k + 1) * hp.batch_size]
            lab = idx[idx < n_lab]
            acc = {name: [np.zeros_like(p) for p in net.params()]
                   for name, net in model.nets().items()}
            total = 0.0
            if stage == "A":
                if use_elbo:
                    val, grads, parts = model.elbo_and_grads(x_all[idx], noise_rng, True, drop_rng)
                    _merge(acc, grads, 1.0)
                    total += val
                    sums["rec"] += parts["rec"]
                    sums["kl"] += parts["kl"]
                sup_weight = hp.lam_sup
            else:
                if hp.lam_con > 0 and len(idx) >= 2:
                    pos, neg = _pairs(gains[idx], large[idx], cfg, hp.pair_corr, noise_rng)
                    val, grads = model.contrastive_and_grads(
                        x_all[idx], model.features(pos), model.features(neg), True, drop_rng)
                    _merge(acc, grads, hp.lam_con)
                    total += hp.lam_con * val
                    sums["con"] += val
                sup_weight = hp.lam_sup * hp.stage_b_sup_scale
            if len(lab) and sup_weight > 0:
                val, grads = model.supervised_and_grads(x_all[lab], gamma[lab], True, drop_rng)
                _merge(acc, grads, sup_weight)
                total += sup_weight * val
                sums["sup"] += val
            adam.step_update(params, [g for name in model.NETS for g in acc[name]])
            steps += 1
            sums["total"] += total
        row = {"epoch": epoch, "stage": stage}
        row.update({f"loss_{k}": v / n_batches for k, v in sums.items()})
        if x_val is not None:
            pred = model.predict_vector(x_val)
            row.update(val_mae=mae(validation.labels, pred), val_r2=r2(validation.labels, pred),
                       val_cosine=cosine(validation.labels, pred))
        history.append(row)
        log.debug("epoch %d %s", epoch, row)
    val_index = np.zeros(0, dtype=int) if validation is None else validation.seeds
    return TrainResult(model, history, steps, val_index)


HISTORY_COLUMNS = ("epoch", "stage", "loss_total", "loss_rec", "loss_kl", "loss_sup", "loss_con",
                   "val_mae", "val_r2", "val_cosine")


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row.get(c, "") if c in ("epoch", "stage")
                        else (f"{row[c]:.9g}" if c in row else "") for c in HISTORY_COLUMNS])


def predict_allocation(model: SsvaeModel, h, cfg: NetworkConfig | None = None) -> PredictionRaw:
    cfg = cfg or model.cfg
    if cfg.shape != model.cfg.shape:
        raise ValueError(f"model dims {model.cfg.shape} do not match config {cfg.shape}")
    logits = model.predict_logits(model.features(h))[0]
    u, b, m, s = cfg.shape
    n_p, n_a = u * b * m * s, u * b * s
    return PredictionRaw(sigmoid(logits[:n_p]).reshape(cfg.shape),
                         logits[n_p:n_p + n_a].reshape(u, b, s),
                         logits[n_p + n_a:].reshape(cfg.shape))


def project_feasible(raw: PredictionRaw, cfg: NetworkConfig, h
                     ) -> tuple[Allocation, list[Violation]]:
    """Structurally valid allocation closest to ``raw``, plus its residual violations.

    Association is the per-UE argmax over RUs; each (RU, PRB, slice) goes to the
    highest-logit associated member if that logit is positive; a served UE
    left without a PRB takes its best free one. Powers are the predicted
    fractions of P_s^max on granted slots, multiplied by one common factor
    so that every RU respects the power and fronthaul caps.
    """
    h = np.asarray(h, dtype=float)
    u_n, b_n, m_n, s_n = cfg.shape
    sl = cfg.ue_slice
    a = Allocation.empty(cfg)
    for u in range(u_n):
        a.alpha[u, int(np.argmax(raw.alpha_logits[u, :, sl[u]])), sl[u]] = 1.0
    holder = -np.ones((b_n, m_n, s_n), dtype=int)
    for s, members in enumerate(cfg.slice_members):
        for b in range(b_n):
            cand = members[a.alpha[members, b, s] == 1]
            if not len(cand):
                continue
            for m in range(m_n):
                scores = raw.beta_logits[cand, b, m, s]
                best = int(np.argmax(scores))
                if scores[best] > 0:
                    holder[b, m, s] = cand[best]
    for u in range(u_n):
        s = sl[u]
        b = int(np.argmax(a.alpha[u, :, s]))
        if not np.any(holder[b, :, s] == u):
            free = np.flatnonzero(holder[b, :, s] < 0)
            if len(free):
                holder[b, free[int(np.argmax(raw.beta_logits[u, b, free, s]))], s] = u
    for b, m, s in zip(*np.nonzero(holder >= 0)):
        a.beta[holder[b, m, s], b, m, s] = 1.0
    pmax = np.asarray(cfg.p_slice_max)
    a.power = np.clip(raw.p_hat, 0.0, 1.0) * pmax * a.beta
    load = (a.alpha[:, :, None, :] * h * a.power).sum(axis=(0, 2, 3))
    budget = cfg.effective_ru_cap - cfg.quant_noise
    with np.errstate(divide="ignore"):
        ratios = np.where(load > 0, budget / np.where(load > 0, load, 1.0), np.inf)
    scale = min(1.0, float(ratios.min())) if budget > 0 else 0.0
    if scale < 1.0:
        a.power = a.power * scale
    return a, check_feasible(h, a, cfg)


class SSVAEAllocator(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit(gains, labels)``, ``predict`` returns target vectors."""

    def __init__(self, cfg: NetworkConfig | None = None, epochs: int = 40,
                 stage_a_epochs: int = 30, batch_size: int = 128, lr: float = 1e-3,
                 dropout: float = 0.3, latent_dim: int = 20, temperature: float = 0.25,
                 lam_rec: float = 1.0, lam_kl: float = 0.1, lam_sup: float = 10.0,
                 lam_con: float = 1.0, val_fraction: float = 0.0, seed: int = 0):
        self.cfg = cfg
        self.epochs = epochs
        self.stage_a_epochs = stage_a_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.dropout = dropout
        self.latent_dim = latent_dim
        self.temperature = temperature
        self.lam_rec = lam_rec
        self.lam_kl = lam_kl
        self.lam_sup = lam_sup
        self.lam_con = lam_con
        self.val_fraction = val_fraction
        self.seed = seed

    def _hyper(self) -> SsvaeHyper:
        keys = ("epochs", "stage_a_epochs", "batch_size", "lr", "dropout", "latent_dim",
                "temperature", "lam_rec", "lam_kl", "lam_sup", "lam_con", "val_fraction", "seed")
        return SsvaeHyper(**{k: getattr(self, k) for k in keys})

    def _gains(self, X):
        cfg = self.cfg
        X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1))
        if X.shape[1] != int(np.prod(cfg.shape)):
            raise ValueError(f"expected {int(np.prod(cfg.shape))} gain features, got {X.shape[1]}")
        if np.any(X < 0):
            raise ValueError("channel gains must be nonnegative")
        return X.reshape(-1, *cfg.shape)

    def fit(self, X, y, X_unlabeled=None):
        if self.cfg is None:
            raise ValueError("cfg is required")
        gains = self._gains(X)
        y = check_array(y)
        if len(y) != len(gains):
            raise ValueError("X and y have different lengths")
        u, b, _, _ = self.cfg.shape
        unl = (np.zeros((0, *self.cfg.shape)) if X_unlabeled is None
               else self._gains(X_unlabeled))
        ds = Dataset(self.cfg, None, gains, np.ones((len(gains), u, b)), y, np.zeros(len(y)),
                     np.arange(len(y)), unlabeled_gains=unl,
                     unlabeled_large_scale=unl.mean(axis=(3, 4)),
                     unlabeled_seeds=np.arange(len(unl)))
        ds.large_scale = gains.mean(axis=(3, 4))
        res = train_ssvae(ds, self._hyper())
        self.model_ = res.model
        self.history_ = res.history
        self.n_features_in_ = int(np.prod(self.cfg.shape))
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.predict_vector(self.model_.features(self._gains(X)))

    def allocate(self, h) -> tuple[Allocation, list[Violation]]:
        check_is_fitted(self, "model_")
        return project_feasible(predict_allocation(self.model_, h), self.cfg, h)
