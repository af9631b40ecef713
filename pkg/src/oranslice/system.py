"""SINR, rates, fronthaul, delay, objective and constraint checking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .config import NetworkConfig

# Relative slack on inequality constraints; keeps exact-boundary grid points feasible.
RTOL = 1e-9


@dataclass
class Allocation:
    """Decision variables of one scenario.

    ``alpha[u, b, s]`` associates UE ``u`` with RU ``b`` in slice ``s``;
    ``beta[u, b, m, s]`` grants PRB ``m`` of RU ``b`` in slice ``s``;
    ``power[u, b, m, s]`` is the transmit power in watts.
    """

    alpha: np.ndarray
    beta: np.ndarray
    power: np.ndarray

    @classmethod
    def empty(cls, cfg: NetworkConfig) -> "Allocation":
        u, b, m, s = cfg.shape
        return cls(np.zeros((u, b, s)), np.zeros((u, b, m, s)), np.zeros((u, b, m, s)))

    def copy(self) -> "Allocation":
        return Allocation(self.alpha.copy(), self.beta.copy(), self.power.copy())

    def to_labels(self, cfg: NetworkConfig) -> np.ndarray:
        """Flat target vector: power / P_s^max, then alpha, then beta (C order)."""
        pmax = np.asarray(cfg.p_slice_max)
        return np.concatenate([
            (self.power / pmax).ravel(), self.alpha.ravel(), self.beta.ravel()])

    @classmethod
    def from_labels(cls, labels, cfg: NetworkConfig) -> "Allocation":
        u, b, m, s = cfg.shape
        labels = np.asarray(labels, dtype=float)
        n_p, n_a = u * b * m * s, u * b * s
        if labels.shape != (label_length(cfg),):
            raise ValueError(f"expected {label_length(cfg)} labels, got {labels.shape}")
        power = labels[:n_p].reshape(u, b, m, s) * np.asarray(cfg.p_slice_max)
        alpha = labels[n_p:n_p + n_a].reshape(u, b, s)
        beta = labels[n_p + n_a:].reshape(u, b, m, s)
        return cls(alpha, beta, power)

    def __eq__(self, other):
        if not isinstance(other, Allocation):
            return NotImplemented
        return (np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.beta, other.beta)
                and np.array_equal(self.power, other.power))


def label_length(cfg: NetworkConfig) -> int:
    u, b, m, s = cfg.shape
    return 2 * u * b * m * s + u * b * s


def _check_shapes(h: np.ndarray, a: Allocation, cfg: NetworkConfig) -> None:
    u, b, m, s = cfg.shape
    if h.shape != cfg.shape:
        raise ValueError(f"channel shape {h.shape} != {cfg.shape}")
    if a.alpha.shape != (u, b, s) or a.beta.shape != cfg.shape or a.power.shape != cfg.shape:
        raise ValueError("allocation shapes do not match the config")


def received_power(h: np.ndarray, a: Allocation) -> np.ndarray:
    """alpha * h * p per (u, b, m, s)."""
    return a.alpha[:, :, None, :] * h * a.power


def sinr_tensor(h: np.ndarray, a: Allocation, cfg: NetworkConfig) -> np.ndarray:
    """SINR of every (u, b, m, s).

    Interference on PRB ``m`` sums alpha*h*p over all (i, j, l) with
    i != u, j != b and l != s simultaneously; evaluated by inclusion-exclusion.
    """
    _check_shapes(h, a, cfg)
    g = received_power(h, a)                              # (U, B, M, S)
    tot = g.sum(axis=(0, 1, 3), keepdims=True)
    s_i = g.sum(axis=0, keepdims=True)                    # fixed j, l
    s_j = g.sum(axis=1, keepdims=True)                    # fixed i, l
    s_l = g.sum(axis=3, keepdims=True)                    # fixed i, j
    s_ij = g.sum(axis=(0, 1), keepdims=True)              # fixed l
    s_il = g.sum(axis=(0, 3), keepdims=True)              # fixed j
    s_jl = g.sum(axis=(1, 3), keepdims=True)              # fixed i
    interference = tot - s_il - s_ij - s_jl + s_i + s_j + s_l - g
    interference = np.maximum(interference, 0.0)
    # negative powers are flagged by check_feasible; they never yield a negative SINR
    return np.maximum(g, 0.0) / (interference + cfg.noise_power)


def sinr(h, a: Allocation, cfg: NetworkConfig, u: int, b: int, m: int, s: int) -> float:
    return float(sinr_tensor(np.asarray(h, dtype=float), a, cfg)[u, b, m, s])


def link_rates(h, a: Allocation, cfg: NetworkConfig) -> np.ndarray:
    """log2(1 + SINR) per (u, b, m, s)."""
    return np.log2(1.0 + sinr_tensor(np.asarray(h, dtype=float), a, cfg))


def ue_rates(h, a: Allocation, cfg: NetworkConfig) -> np.ndarray:
    """R_{u,s}: alpha * beta weighted sum of link rates over (b, m); shape (U, S)."""
    r = link_rates(h, a, cfg)
    weight = a.alpha[:, :, None, :] * a.beta
    return np.where(weight != 0, weight * r, 0.0).sum(axis=(1, 2))


def rate_ue(h, a: Allocation, cfg: NetworkConfig, u: int, s: int) -> float:
    return float(ue_rates(h, a, cfg)[u, s])


def ru_power_and_fronthaul(h, a: Allocation, cfg: NetworkConfig, b: int | None = None):
    """Total RU power P_b (with quantization noise) and fronthaul rate log2(P_b / sigma1^2).

    Returns arrays over all RUs, or a scalar pair when ``b`` is given.
    """
    h = np.asarray(h, dtype=float)
    _check_shapes(h, a, cfg)
    p_b = received_power(h, a).sum(axis=(0, 2, 3)) + cfg.quant_noise
    c_b = np.log2(p_b / cfg.quant_noise)
    if b is None:
        return p_b, c_b
    return float(p_b[b]), float(c_b[b])


def delay(cfg: NetworkConfig, rate):
    """Propagation plus transmission delay L/C + mu / (f * R); +inf where R == 0."""
    rate = np.asarray(rate, dtype=float)
    prop = cfg.link_length / cfg.prop_speed
    with np.errstate(divide="ignore"):
        tx = np.where(rate > 0, cfg.mean_packet / (cfg.prb_bandwidth * np.where(rate > 0, rate, 1.0)),
                      np.inf)
    out = prop + tx
    return float(out) if out.ndim == 0 else out


def objective(h, a: Allocation, cfg: NetworkConfig) -> float:
    w = np.asarray(cfg.slice_weights)
    return float((ue_rates(h, a, cfg) * w).sum())


@dataclass
class RateReport:
    rate_ue: np.ndarray        # (U, S)
    rate_total: np.ndarray     # (U,)
    ru_power: np.ndarray       # (B,)
    fronthaul_rate: np.ndarray  # (B,)
    delay: np.ndarray          # (U, S); inf where not served or rate 0
    objective: float


def rate_report(h, a: Allocation, cfg: NetworkConfig) -> RateReport:
    r = ue_rates(h, a, cfg)
    p_b, c_b = ru_power_and_fronthaul(h, a, cfg)
    d = np.where(cfg.served, delay(cfg, r), np.inf)
    return RateReport(r, r.sum(axis=1), p_b, c_b, d,
                      float((r * np.asarray(cfg.slice_weights)).sum()))


class Violation(NamedTuple):
    constraint: str
    index: tuple
    value: float
    bound: float


# Constraint ids in evaluation order.
CONSTRAINTS = (
    "alpha_binary", "beta_binary", "alpha_non_member", "association",
    "beta_le_alpha", "prb_exclusive", "power_nonneg", "power_max",
    "power_without_grant", "ru_power", "fronthaul", "min_rate", "delay",
)


def _le(value, bound):
    return value <= bound + RTOL * np.abs(bound) + 1e-12


def check_feasible(h, a: Allocation, cfg: NetworkConfig) -> list[Violation]:
    """Every violated constraint with its measured value; empty iff feasible."""
    h = np.asarray(h, dtype=float)
    _check_shapes(h, a, cfg)
    out: list[Violation] = []
    served = cfg.served
    pmax = np.asarray(cfg.p_slice_max)

    def flag(cid, mask, values, bound):
        bound = np.broadcast_to(np.asarray(bound, dtype=float), mask.shape)
        values = np.broadcast_to(values, mask.shape)
        for idx in zip(*np.nonzero(mask)):
            out.append(Violation(cid, tuple(int(i) for i in idx), float(values[idx]),
                                 float(bound[idx])))

    alpha, beta, p = a.alpha, a.beta, a.power
    flag("alpha_binary", (alpha != 0) & (alpha != 1), alpha, 1.0)
    flag("beta_binary", (beta != 0) & (beta != 1), beta, 1.0)
    flag("alpha_non_member", (alpha != 0) & ~served[:, None, :], alpha, 0.0)
    assoc = alpha.sum(axis=1)
    flag("association", served & (assoc != 1), assoc, 1.0)
    flag("beta_le_alpha", beta > alpha[:, :, None, :], beta,
         np.broadcast_to(alpha[:, :, None, :], beta.shape))
    load = (alpha[:, :, None, :] * beta).sum(axis=0)
    flag("prb_exclusive", load > 1, load, 1.0)
    flag("power_nonneg", p < 0, p, 0.0)
    bound = np.broadcast_to(pmax, p.shape)
    flag("power_max", ~_le(p, bound), p, bound)
    flag("power_without_grant", (p > 0) & (beta == 0), p, 0.0)

    p_b, c_b = ru_power_and_fronthaul(h, a, cfg)
    flag("ru_power", ~_le(p_b, cfg.p_ru_max), p_b, cfg.p_ru_max)
    flag("fronthaul", ~_le(c_b, cfg.c_fh_max), c_b, cfg.c_fh_max)

    r = ue_rates(h, a, cfg)
    rmin = np.broadcast_to(np.asarray(cfg.r_min), r.shape)
    low = served & ~_le(rmin, r)
    flag("min_rate", low, r, rmin)
    d = delay(cfg, r)
    dmax = np.broadcast_to(np.asarray(cfg.d_max), r.shape)
    flag("delay", served & ~_le(d, dmax), d, dmax)
    return out


def is_feasible(h, a: Allocation, cfg: NetworkConfig) -> bool:
    return not check_feasible(h, a, cfg)


ALLOCATION_HEADER = "# oranslice-allocation schema_version=1"


def save_allocation(a: Allocation, path) -> None:
    """Flat text: one ``kind u b m s value`` line per nonzero entry; ``m`` is ``-`` for alpha."""
    u, b, m, s = a.beta.shape
    lines = [f"{ALLOCATION_HEADER} shape={u},{b},{m},{s}", "# kind u b m s value"]
    for idx in zip(*np.nonzero(a.alpha)):
        lines.append(f"alpha {idx[0]} {idx[1]} - {idx[2]} {a.alpha[idx]:.17g}")
    for name, arr in (("beta", a.beta), ("power", a.power)):
        for idx in zip(*np.nonzero(arr)):
            lines.append(f"{name} {' '.join(str(i) for i in idx)} {arr[idx]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_allocation(path) -> Allocation:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(ALLOCATION_HEADER + " shape="):
        raise ValueError(f"{path}: not an oranslice allocation file (schema_version 1)")
    u, b, m, s = (int(v) for v in lines[0].split("shape=")[1].split(","))
    a = Allocation(np.zeros((u, b, s)), np.zeros((u, b, m, s)), np.zeros((u, b, m, s)))
    for ln in lines[1:]:
        if not ln.strip() or ln.startswith("#"):
            continue
        kind, iu, ib, im, is_, val = ln.split()
        if kind == "alpha":
            a.alpha[int(iu), int(ib), int(is_)] = float(val)
        elif kind in ("beta", "power"):
            getattr(a, kind)[int(iu), int(ib), int(im), int(is_)] = float(val)
        else:
            raise ValueError(f"{path}: unknown entry kind {kind!r}")
    return a
