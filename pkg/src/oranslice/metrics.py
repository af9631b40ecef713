"""Regression and allocation-agreement metrics over flattened vectors."""
from __future__ import annotations

import numpy as np

from .system import Allocation


class ZeroVarianceError(ValueError):
    pass


def _pair(y, y_hat):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ValueError("metrics need at least one element")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def r2(y, y_hat) -> float:
    """1 - SS_res / SS_tot; raises when the target is constant."""
    y, y_hat = _pair(y, y_hat)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ZeroVarianceError("r2 is undefined for a constant target")
    return float(1.0 - np.sum((y - y_hat) ** 2) / ss_tot)


def cosine(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    norm = np.linalg.norm(y) * np.linalg.norm(y_hat)
    if norm == 0:
        raise ZeroVarianceError("cosine is undefined for a zero vector")
    return float(np.dot(y, y_hat) / norm)


def pearson(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    dy, dh = y - y.mean(), y_hat - y_hat.mean()
    sy, sh = np.sqrt(np.sum(dy ** 2)), np.sqrt(np.sum(dh ** 2))
    if sy == 0 or sh == 0:
        raise ZeroVarianceError("pearson is undefined for a constant input")
    return float(np.sum(dy * dh) / (sy * sh))


def association_error(a: Allocation, b: Allocation) -> float:
    """Share of alpha and beta entries on which the two allocations differ."""
    if a.alpha.shape != b.alpha.shape or a.beta.shape != b.beta.shape:
        raise ValueError("allocations have different dimensions")
    diff = np.abs(a.alpha - b.alpha).sum() + np.abs(a.beta - b.beta).sum()
    return float(diff / (a.alpha.size + a.beta.size))


def regression_report(y, y_hat) -> dict:
    return {"mae": mae(y, y_hat), "r2": r2(y, y_hat), "cosine": cosine(y, y_hat),
            "pearson": pearson(y, y_hat)}
