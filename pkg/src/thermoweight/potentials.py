"""Sub-multiplicative word functions on the language of an SFT.

Three presentations are supported: the constant function 1, functions
induced by a locally constant ``f`` (``phi(I) = sup exp(S_n f)`` over the
cylinder, evaluated exactly), and norms of products of nonnegative matrices.
All evaluation happens in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .logspace import NEG_INF, LogValue, group_max
from .symbolic import (
    DEFAULT_WORD_CAP,
    ResourceCapError,
    Sft,
    enumerate_language,
    language_size,
    ranker,
)


class DegeneratePotentialError(ValueError):
    pass


class Potential:
    """Base class. Subclasses implement :meth:`log_phi_words`."""

    kind = "abstract"
    window = 1

    def __init__(self, host: Sft):
        self.host = host

    def log_phi_words(self, words: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_locally_constant(self) -> bool:
        return False


class LocallyConstantPotential(Potential):
    """``phi(I) = max over legal extensions of exp(S_n f)`` for a window-``w`` ``f``.

    ``log_table[r]`` is ``f`` on the word of rank ``r`` in ``L_w(host)``.
    """

    kind = "locally_constant"

    def __init__(self, host: Sft, window: int, log_table):
        super().__init__(host)
        if window < 1:
            raise ValueError("window must be >= 1")
        table = np.asarray(log_table, dtype=float)
        expected = language_size(host, window)
        if table.shape != (expected,):
            raise ValueError(f"table for window {window} needs {expected} entries, got {table.shape}")
        if np.isnan(table).any() or (table == math.inf).any():
            raise ValueError("log table entries must be finite or -inf")
        table.setflags(write=False)
        self.window = window
        self.log_table = table
        self._tails = {q: self._tail_table(q) for q in range(1, window)}

    @classmethod
    def from_symbol_logs(cls, host: Sft, logs: Sequence[float]) -> "LocallyConstantPotential":
        return cls(host, 1, np.asarray(logs, dtype=float))

    @classmethod
    def from_mapping(cls, host: Sft, window: int, mapping: Mapping) -> "LocallyConstantPotential":
        words = enumerate_language(host, window)
        table = np.empty(len(words))
        for r, w in enumerate(words):
            key = tuple(int(s) for s in w)
            if key not in mapping:
                raise ValueError(f"no value for legal window {list(key)}")
            table[r] = float(mapping[key])
        return cls(host, window, table)

    @property
    def is_locally_constant(self) -> bool:
        return True

    @property
    def f_range(self) -> tuple[float, float]:
        finite = self.log_table[np.isfinite(self.log_table)]
        return float(finite.min()), float(finite.max())

    def _window_sums(self, words: np.ndarray, starts) -> np.ndarray:
        rk = ranker(self.host, self.window)
        total = np.zeros(len(words))
        for t in starts:
            total += self.log_table[rk.rank(words[:, t : t + self.window])]
        return total

    def _tail_table(self, q: int) -> np.ndarray:
        # best value of the q windows starting in a length-q suffix, over extensions
        w = self.window
        ext = enumerate_language(self.host, q + w - 1)
        vals = self._window_sums(ext, range(q))
        return group_max(vals, ranker(self.host, q).rank(ext[:, :q]), language_size(self.host, q))

    def log_phi_words(self, words: np.ndarray) -> np.ndarray:
        words = np.atleast_2d(np.asarray(words))
        n = words.shape[1]
        legal = self.host.legal_rows(words)
        if n == 0:
            return np.zeros(len(words))
        w = np.where(legal[:, None], words, 0)
        total = self._window_sums(w, range(0, n - self.window + 1))
        q = min(n, self.window - 1)
        if q > 0:
            total = total + self._tails[q][ranker(self.host, q).rank(w[:, n - q :])]
        total[~legal] = NEG_INF
        return total


class ConstantPotential(LocallyConstantPotential):
    """``phi = 1`` on the whole language."""

    kind = "constant"

    def __init__(self, host: Sft):
        super().__init__(host, 1, np.zeros(host.size))


class MatrixProductPotential(Potential):
    """``phi(I) = sum of entries of M_{i_1} ... M_{i_n}`` for nonnegative matrices."""

    kind = "matrix_product"

    def __init__(self, host: Sft, matrices):
        super().__init__(host)
        m = np.asarray(matrices, dtype=float)
        if m.ndim != 3 or m.shape[0] != host.size or m.shape[1] != m.shape[2]:
            raise ValueError(f"need {host.size} square matrices, got array of shape {m.shape}")
        if (m < 0).any() or not np.isfinite(m).all():
            raise ValueError("matrices must be finite and nonnegative")
        m.setflags(write=False)
        self.matrices = m

    def log_phi_words(self, words: np.ndarray) -> np.ndarray:
        words = np.atleast_2d(np.asarray(words))
        legal = self.host.legal_rows(words)
        d = self.matrices.shape[1]
        v = np.ones((len(words), d))
        scale = np.zeros(len(words))
        for t in range(words.shape[1]):
            mats = self.matrices[np.where(legal, words[:, t], 0)]
            v = np.einsum("nd,nde->ne", v, mats)
            top = v.max(axis=1)
            good = top > 0
            v[good] /= top[good, None]
            with np.errstate(divide="ignore"):
                scale += np.log(top)
        with np.errstate(divide="ignore"):
            out = scale + np.log(v.sum(axis=1))
        out[~np.isfinite(out)] = NEG_INF
        out[~legal] = NEG_INF
        return out


class TabulatedPotential(Potential):
    """A word function stored as dense log tables per length (e.g. a folded level)."""

    kind = "tabulated"

    def __init__(self, host: Sft, tables: Mapping[int, np.ndarray]):
        super().__init__(host)
        self.tables = {int(n): np.asarray(t, dtype=float) for n, t in tables.items()}
        self.tables.setdefault(0, np.zeros(1))

    @property
    def max_length(self) -> int:
        return max(self.tables)

    def log_phi_words(self, words: np.ndarray) -> np.ndarray:
        words = np.atleast_2d(np.asarray(words))
        n = words.shape[1]
        if n not in self.tables:
            raise ValueError(f"no table for words of length {n}")
        legal = self.host.legal_rows(words)
        w = np.where(legal[:, None], words, 0)
        out = self.tables[n][ranker(self.host, n).rank(w)]
        out = np.where(legal, out, NEG_INF)
        return out


def phi_eval(phi: Potential, word: Sequence[int]) -> LogValue:
    """Exact ``phi(I)``; illegal words give the zero LogValue."""
    w = np.asarray(list(word), dtype=np.int64)
    if len(w) == 0:
        return LogValue.one()
    if not phi.host.is_legal(w):
        return LogValue.zero()
    return LogValue(float(phi.log_phi_words(w[None, :])[0]))


@dataclass(frozen=True)
class DwConstants:
    """Finite-depth estimates of the constants ``c`` and ``gamma``.

    ``log_c`` and ``log_gamma`` are ``<= 0``. ``certified`` is True when the
    finite minima are provably the true ones. ``log_c_split`` keeps the
    sub-multiplicativity part of ``c`` alone (``None`` means "same as ``log_c``").
    """

    p: int
    log_c: float
    log_gamma: float
    checked_length: int
    mode: str = "weak"
    certified: bool = False
    log_c_split: Optional[float] = None

    @property
    def split_log_c(self) -> float:
        """``log`` of the constant in ``phi(IJ) <= c^-1 phi(I) phi(J)``."""
        return self.log_c if self.log_c_split is None else self.log_c_split

    @property
    def c(self) -> float:
        return math.exp(self.log_c)

    @property
    def gamma(self) -> float:
        return math.exp(self.log_gamma)

    def powered(self, s: float) -> "DwConstants":
        """Constants of ``phi ** s``."""
        return DwConstants(
            self.p, self.log_c * s, self.log_gamma * s, self.checked_length, self.mode, self.certified, self.split_log_c * s
        )

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "c": self.c,
            "log_c": self.log_c,
            "gamma": self.gamma,
            "log_gamma": self.log_gamma,
            "log_c_split": self.split_log_c,
            "checked_length": self.checked_length,
            "mode": self.mode,
            "certified": self.certified,
        }


def _words_upto(X: Sft, top: int, cap: int):
    return [np.asarray(enumerate_language(X, n, cap)) for n in range(top + 1)]


def estimate_constants(
    phi: Potential,
    p: int,
    L: int,
    mode: str = "weak",
    cap: int = 20_000_000,
) -> DwConstants:
    """Minimal ``c`` and ``gamma`` over all words up to length ``L``.

    ``c`` is the smaller of the sub-multiplicativity defect over splits of
    words of length ``<= L`` and the best-connector ratio over pairs of words
    of length ``<= L``; ``gamma`` is the worst one-symbol extension ratio.
    """
    if mode not in ("weak", "exact"):
        raise ValueError("mode must be 'weak' or 'exact'")
    if p < 0:
        raise ValueError("p must be >= 0")
    X = phi.host
    L = max(L, 1)
    top = 2 * L + p
    if isinstance(phi, TabulatedPotential) and phi.max_length < top:
        raise ValueError(f"tabulated potential needs lengths up to {top}, has {phi.max_length}")
    words = _words_upto(X, top, cap)
    logs = [phi.log_phi_words(w) if len(w) else np.zeros(0) for w in words]
    logs[0] = np.zeros(1)
    if not np.isfinite(logs[L]).any():
        raise DegeneratePotentialError(f"phi vanishes on all of L_{L}")

    log_c = 0.0
    # (1) phi(IJ) <= c^-1 phi(I) phi(J)
    for n in range(2, L + 1):
        W = words[n]
        lw = logs[n]
        pos = np.isfinite(lw)
        for j in range(1, n):
            li = logs[j][ranker(X, j).rank(W[:, :j])]
            lj = logs[n - j][ranker(X, n - j).rank(W[:, j:])]
            ratio = li[pos] + lj[pos] - lw[pos]
            if ratio.size:
                log_c = min(log_c, float(ratio.min()))
    log_split = log_c

    # (2) some connector K gives phi(IKJ) >= c phi(I) phi(J)
    lengths = range(0, p + 1) if mode == "weak" else [p]
    work = 0
    for n1 in range(1, L + 1):
        for n2 in range(1, L + 1):
            I = words[n1][np.isfinite(logs[n1])]
            J = words[n2][np.isfinite(logs[n2])]
            li = logs[n1][np.isfinite(logs[n1])]
            lj = logs[n2][np.isfinite(logs[n2])]
            best = np.full((len(I), len(J)), NEG_INF)
            for kl in lengths:
                Ks = words[kl]
                work += len(I) * len(J) * len(Ks)
                if work > cap:
                    raise ResourceCapError("connector search exceeds the work cap; lower L")
                for K in Ks:
                    ii, jj = np.meshgrid(np.arange(len(I)), np.arange(len(J)), indexing="ij")
                    ii, jj = ii.ravel(), jj.ravel()
                    ikj = np.concatenate(
                        [I[ii], np.broadcast_to(K, (len(ii), kl)).astype(I.dtype), J[jj]], axis=1
                    )
                    val = phi.log_phi_words(ikj)
                    np.maximum.at(best, (ii, jj), val)
            ratio = best - li[:, None] - lj[None, :]
            if ratio.size:
                worst = float(ratio.min())
                if worst == NEG_INF:
                    raise ValueError(
                        f"no admissible connector of length {'<=' if mode == 'weak' else '='} {p} for some pair; "
                        "p is below the specification gap"
                    )
                log_c = min(log_c, worst)

    # gamma: for every I some i, j with phi(iI), phi(Ij) >= gamma phi(I)
    log_gamma = 0.0
    for n in range(0, L + 1):
        ext = words[n + 1]
        le = logs[n + 1]
        base = logs[n]
        for side in ("left", "right"):
            parent = ext[:, 1:] if side == "left" else ext[:, :-1]
            pr = ranker(X, n).rank(parent)
            gm = group_max(le, pr, len(base))
            ok = np.isfinite(base)
            if ok.any():
                log_gamma = min(log_gamma, float((gm[ok] - base[ok]).min()))

    certified = isinstance(phi, LocallyConstantPotential) and L >= phi.window
    return DwConstants(p, log_c, log_gamma, L, mode, certified, log_split)
