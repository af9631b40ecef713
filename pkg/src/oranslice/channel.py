"""Rayleigh-faded channel gains with log-distance path loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig


@dataclass
class ChannelTensor:
    """Power gains ``gains[u, b, m, s]`` plus the (U, B) large-scale factor they were drawn with."""

    gains: np.ndarray
    large_scale: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.gains if dtype is None else self.gains.astype(dtype)

    @property
    def shape(self):
        return self.gains.shape


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_large_scale(cfg: NetworkConfig, rng) -> np.ndarray:
    """(d / d0) ** -eta for a UE-RU distance drawn uniformly in the cell radius range."""
    rng = as_rng(rng)
    lo, hi = cfg.cell_radius_range
    d = rng.uniform(lo, hi, size=(cfg.num_ues, cfg.num_rus))
    return (d / lo) ** (-cfg.pathloss_exponent)


def generate_channel(cfg: NetworkConfig, rng=None, *, unit_fading: bool = False) -> ChannelTensor:
    """Draw one channel; ``unit_fading`` replaces the Rayleigh power draw with 1."""
    rng = as_rng(cfg.seed if rng is None else rng)
    large = draw_large_scale(cfg, rng)
    if unit_fading:
        fading = np.ones(cfg.shape)
    else:
        fading = np.abs(_complex_gaussian(rng, cfg.shape)) ** 2
    return ChannelTensor(large[:, :, None, None] * fading, large)


def _large_scale_of(h) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(h, ChannelTensor):
        return h.gains, h.large_scale
    gains = np.asarray(h, dtype=float)
    # Unknown geometry: the per-link sample mean is the ML estimate of the large-scale factor.
    return gains, gains.mean(axis=(2, 3))


def add_channel_noise(h, variance: float, rng=None, *, clamp: bool = True):
    if variance < 0:
        raise ValueError("noise variance must be >= 0")
    rng = as_rng(rng)
    gains = np.asarray(h, dtype=float)
    if variance == 0:
        out = gains.copy()
    else:
        out = gains + rng.normal(0.0, np.sqrt(variance), size=gains.shape)
    if clamp:
        out = np.maximum(out, 0.0)
    if isinstance(h, ChannelTensor):
        return ChannelTensor(out, h.large_scale.copy())
    return out


def generate_contrastive_pair(h, rng=None, mode: str = "similar", corr: float = 0.9,
                              cfg: NetworkConfig | None = None) -> ChannelTensor:
    """Channel correlated with ``h`` (similar) or independent of it (dissimilar).

    Similar mode keeps the geometry and mixes the fast-fading coefficient:
    g' = corr * g + sqrt(1 - corr^2) * w with w ~ CN(0, 1). Only |g|^2 is kept in
    ``h``, so the phase of g is redrawn uniformly, which leaves the joint law intact.
    """
    if not 0.0 <= corr <= 1.0:
        raise ValueError("corr must lie in [0, 1]")
    rng = as_rng(rng)
    gains, large = _large_scale_of(h)
    if mode == "dissimilar":
        if cfg is None:
            raise ValueError("dissimilar pairs need the network config for fresh geometry")
        return generate_channel(cfg, rng)
    if mode != "similar":
        raise ValueError(f"unknown mode {mode!r}")
    if corr == 1.0:
        return ChannelTensor(gains.copy(), large.copy())
    ls = large[:, :, None, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        mag = np.sqrt(np.where(ls > 0, gains / ls, 0.0))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=gains.shape)
    g = mag * np.exp(1j * phase)
    g_new = corr * g + np.sqrt(1.0 - corr ** 2) * _complex_gaussian(rng, gains.shape)
    return ChannelTensor(ls * np.abs(g_new) ** 2, large.copy())


CHANNEL_HEADER = "# oranslice-channel schema_version=1"


def save_channel(ch: ChannelTensor, path) -> None:
    """Text layout: header with the shape, then one line each of large-scale factors and gains."""
    u, b, m, s = ch.gains.shape
    fmt = lambda a: " ".join(f"{v:.17g}" for v in np.ravel(a))
    with open(path, "w") as fh:
        fh.write(f"{CHANNEL_HEADER} shape={u},{b},{m},{s}\n")
        fh.write(f"large_scale {fmt(ch.large_scale)}\n")
        fh.write(f"gains {fmt(ch.gains)}\n")


def load_channel(path) -> ChannelTensor:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith(CHANNEL_HEADER + " shape="):
        raise ValueError(f"{path}: not an oranslice channel file (schema_version 1)")
    shape = tuple(int(v) for v in lines[0].split("shape=")[1].split(","))
    rows = dict(ln.split(" ", 1) for ln in lines[1:])
    try:
        large = np.array(rows["large_scale"].split(), dtype=float).reshape(shape[:2])
        gains = np.array(rows["gains"].split(), dtype=float).reshape(shape)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed channel file ({exc})") from exc
    return ChannelTensor(gains, large)
