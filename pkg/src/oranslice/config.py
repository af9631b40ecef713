"""Scenario configuration and its flat YAML file format."""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

SCHEMA_VERSION = 1


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


class ConfigError(ValueError):
    pass


def _as_tuple(value, n: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * n
    out = tuple(float(v) for v in value)
    if len(out) != n:
        raise ConfigError(f"{name} needs {n} entries (one per slice), got {len(out)}")
    return out


@dataclass(frozen=True)
class NetworkConfig:
    """Physical and constraint parameters of one scenario.

    Slices ``0 .. num_slices_embb-1`` are eMBB and the rest are URLLC. UEs are
    ordered eMBB first; each UE is a member of exactly one slice, assigned
    round-robin within its service type. Per-slice quantities accept a scalar
    (broadcast to every slice) or one value per slice.

    Rates are spectral efficiencies (bit/s/Hz summed over PRBs). ``r_min`` and
    ``c_fh_max`` use that unit; the delay model converts a rate to bit/s by
    multiplying with ``prb_bandwidth``.
    """

    num_rus: int = 2
    num_ues_embb: int = 2
    num_ues_urllc: int = 2
    num_prbs: int = 3
    num_slices_embb: int = 1
    num_slices_urllc: int = 1
    prb_bandwidth: float = 180e3          # Hz
    noise_power: float = 1e-1             # W
    quant_noise: float = 1e-2             # W
    p_ru_max: float = 1.0                 # W
    p_slice_max: tuple[float, ...] = (1.0, 1.0)   # W
    r_min: tuple[float, ...] = (1.0, 0.5)         # bit/s/Hz
    c_fh_max: float = 8.0                 # bit/s/Hz
    d_max: tuple[float, ...] = (1e-2, 1.5e-3)     # s
    link_length: float = 1e4              # m
    prop_speed: float = 2e8               # m/s
    mean_packet: float = 256.0            # bit
    slice_weights: tuple[float, ...] = (1.0, 2.0)
    cell_radius_range: tuple[float, float] = (200.0, 500.0)   # m
    pathloss_exponent: float = 3.0
    seed: int = 0

    def __post_init__(self):
        s = self.num_slices_embb + self.num_slices_urllc
        for name in ("p_slice_max", "r_min", "d_max", "slice_weights"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name), s, name))
        object.__setattr__(
            self, "cell_radius_range", tuple(float(v) for v in self.cell_radius_range))
        self.validate()

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            vals = v if isinstance(v, tuple) else (v,)
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vals):
                raise ConfigError(f"{f.name} must be numeric, got {v!r}")
        for name in ("num_rus", "num_ues_embb", "num_ues_urllc", "num_prbs",
                     "num_slices_embb", "num_slices_urllc"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        for name in ("prb_bandwidth", "noise_power", "quant_noise", "p_ru_max",
                     "c_fh_max", "prop_speed"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("p_slice_max", "d_max", "slice_weights"):
            if not all(v > 0 for v in getattr(self, name)):
                raise ConfigError(f"every entry of {name} must be > 0")
        if not all(v >= 0 for v in self.r_min):
            raise ConfigError("r_min entries must be >= 0")
        if self.link_length < 0 or self.mean_packet < 0:
            raise ConfigError("link_length and mean_packet must be >= 0")
        lo, hi = self.cell_radius_range
        if not 0 < lo < hi:
            raise ConfigError("cell_radius_range needs 0 < min < max")
        if self.pathloss_exponent < 0:
            raise ConfigError("pathloss_exponent must be >= 0")

    @property
    def num_ues(self) -> int:
        return self.num_ues_embb + self.num_ues_urllc

    @property
    def num_slices(self) -> int:
        return self.num_slices_embb + self.num_slices_urllc

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """Dimensions (U, B, M, S) of channel, power and PRB tensors."""
        return (self.num_ues, self.num_rus, self.num_prbs, self.num_slices)

    @property
    def ue_slice(self) -> np.ndarray:
        e = np.arange(self.num_ues_embb) % self.num_slices_embb
        u = self.num_slices_embb + np.arange(self.num_ues_urllc) % self.num_slices_urllc
        return np.concatenate([e, u]).astype(int)

    @property
    def served(self) -> np.ndarray:
        """Boolean (U, S) mask of UE/slice membership."""
        mask = np.zeros((self.num_ues, self.num_slices), dtype=bool)
        mask[np.arange(self.num_ues), self.ue_slice] = True
        return mask

    @property
    def slice_members(self) -> list[np.ndarray]:
        sl = self.ue_slice
        return [np.flatnonzero(sl == s) for s in range(self.num_slices)]

    @property
    def effective_ru_cap(self) -> float:
        """Largest P_b allowed by both the RU power cap and the fronthaul cap."""
        return min(self.p_ru_max, self.quant_noise * 2.0 ** self.c_fh_max)

    @property
    def min_rate_required(self) -> np.ndarray:
        """Per-slice rate implied jointly by ``r_min`` and the delay cap."""
        out = np.array(self.r_min, dtype=float)
        prop = self.link_length / self.prop_speed
        for s, dmax in enumerate(self.d_max):
            slack = dmax - prop
            need = math.inf if slack <= 0 else self.mean_packet / (self.prb_bandwidth * slack)
            out[s] = max(out[s], need)
        return out

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def full_scale(cls, **overrides) -> "NetworkConfig":
        """Full-size scenario: 20 UEs, 25 PRBs, dBm-specified caps."""
        base = dict(
            num_rus=2, num_ues_embb=10, num_ues_urllc=10, num_prbs=25,
            prb_bandwidth=180e3,
            noise_power=dbm_to_watts(-174.0),
            quant_noise=dbm_to_watts(-174.0),
            p_ru_max=dbm_to_watts(40.0),
            p_slice_max=dbm_to_watts(30.0),
            r_min=(20.0, 2.0),
            c_fh_max=46.0,
        )
        base.update(overrides)
        return cls(**base)

    def digest(self) -> str:
        return hashlib.sha256(dump_config_text(self).encode()).hexdigest()


_UNITS = {
    "prb_bandwidth": "Hz", "noise_power": "W", "quant_noise": "W", "p_ru_max": "W",
    "p_slice_max": "W, per slice", "r_min": "bit/s/Hz, per slice",
    "c_fh_max": "bit/s/Hz", "d_max": "s, per slice", "link_length": "m",
    "prop_speed": "m/s", "mean_packet": "bit", "slice_weights": "per slice",
    "cell_radius_range": "m (min, max)",
}


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        text = repr(v)
        if math.isinf(v):
            return ".inf" if v > 0 else "-.inf"
        mant, e, exp = text.partition("e")
        # YAML 1.1 floats need a dot in the mantissa and a signed exponent
        if e:
            mant = mant if "." in mant else mant + ".0"
            exp = exp if exp[0] in "+-" else "+" + exp
            return f"{mant}e{exp}"
        return text
    return str(v)


def dump_config_text(cfg: NetworkConfig) -> str:
    lines = [f"schema_version: {SCHEMA_VERSION}"]
    for k, v in cfg.to_dict().items():
        unit = _UNITS.get(k)
        lines.append(f"{k}: {_fmt(v)}" + (f"  # {unit}" if unit else ""))
    return "\n".join(lines) + "\n"


def save_config(cfg: NetworkConfig, path) -> None:
    Path(path).write_text(dump_config_text(cfg))


def load_config(path) -> NetworkConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key/value document")
    return NetworkConfig.from_dict(data)
