"""Nonnegative reals carried as natural logs; ``-inf`` is zero."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = -math.inf


@dataclass(frozen=True, order=True)
class LogValue:
    log: float

    @classmethod
    def zero(cls) -> "LogValue":
        return cls(NEG_INF)

    @classmethod
    def one(cls) -> "LogValue":
        return cls(0.0)

    @classmethod
    def of(cls, x: float) -> "LogValue":
        if x < 0:
            raise ValueError("LogValue holds nonnegative reals only")
        return cls(math.log(x) if x > 0 else NEG_INF)

    @property
    def value(self) -> float:
        return math.exp(self.log)

    @property
    def is_zero(self) -> bool:
        return self.log == NEG_INF

    def __mul__(self, other: "LogValue") -> "LogValue":
        return LogValue(self.log + other.log)

    def __truediv__(self, other: "LogValue") -> "LogValue":
        if other.is_zero:
            if self.is_zero:
                return LogValue.zero()
            raise ZeroDivisionError("division by a zero LogValue")
        return LogValue(self.log - other.log)

    def __add__(self, other: "LogValue") -> "LogValue":
        return LogValue(float(logsumexp(np.array([self.log, other.log]))))

    def __pow__(self, s: float) -> "LogValue":
        if self.is_zero:
            return self if s > 0 else LogValue.one()
        return LogValue(self.log * s)


def logsumexp(x: np.ndarray) -> float:
    """Stable ``log(sum(exp(x)))`` with the maximum factored out."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return NEG_INF
    m = x.max()
    if m == NEG_INF:
        return NEG_INF
    return float(m + np.log(np.exp(x - m).sum()))


def group_logsumexp(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    """Per-group log-sum-exp of ``values`` keyed by integer ``groups``."""
    values = np.asarray(values, dtype=float)
    gmax = np.full(n_groups, NEG_INF)
    np.maximum.at(gmax, groups, values)
    safe = np.where(np.isfinite(gmax), gmax, 0.0)
    with np.errstate(invalid="ignore"):
        shifted = np.exp(values - safe[groups])
    shifted[~np.isfinite(values)] = 0.0
    sums = np.bincount(groups, weights=shifted, minlength=n_groups)
    with np.errstate(divide="ignore"):
        out = safe + np.log(sums)
    out[~np.isfinite(gmax)] = NEG_INF
    return out


def group_max(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.full(n_groups, NEG_INF)
    np.maximum.at(out, groups, np.asarray(values, dtype=float))
    return out


def scale_power(logs: np.ndarray, s: float) -> np.ndarray:
    """``logs * s`` keeping zeros at zero."""
    logs = np.asarray(logs, dtype=float)
    with np.errstate(invalid="ignore"):
        out = logs * s
    out[logs == NEG_INF] = NEG_INF
    return out
