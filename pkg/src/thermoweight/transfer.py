"""Transfer-matrix evaluation of ``phi**s`` sums over fibers of a one-block map.

For a locally constant potential with window ``w`` the sum of ``phi(I)**s``
over all ``I`` in ``L_n(X)`` whose image is a fixed word ``J`` is a product
of masked transfer matrices over ``(w-1)``-block states. Here many target
words are processed at once as rows of a batch.

All weights are shifted by their maximum before exponentiation. Every path
of length ``n`` uses the same number of factors, so the shifts cancel in
every normalized quantity; absolute sums add ``n_steps * shift`` back.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from .logspace import NEG_INF
from .potentials import LocallyConstantPotential
from .symbolic import enumerate_language, ranker


def _shifted_exp(logs: np.ndarray) -> tuple[np.ndarray, float]:
    finite = logs[np.isfinite(logs)]
    shift = float(finite.max()) if finite.size else 0.0
    with np.errstate(under="ignore"):
        return np.exp(logs - shift), shift


class BlockTransfer:
    """Start, step and end weights of ``phi**s`` on ``m``-block states.

    ``m = max(window - 1, 1)``. A word of length ``n >= m`` is a path of
    ``n - m + 1`` states; its weight is ``start[b_0] * prod step[b_t, b_{t+1}] * end[b_last]``.
    """

    def __init__(self, phi: LocallyConstantPotential, s: float):
        X = phi.host
        w = phi.window
        m = max(w - 1, 1)
        self.phi, self.s, self.m = phi, float(s), m
        states = np.asarray(enumerate_language(X, m))
        S = len(states)
        self.states = states
        self.last = states[:, -1].astype(np.int64)
        rk_w = ranker(X, w)
        log_start = np.zeros(S)
        log_end = np.zeros(S)
        log_step = np.full((S, S), NEG_INF)
        # successor block of b appending symbol y
        ext = np.asarray(enumerate_language(X, m + 1))
        src = ranker(X, m).rank(ext[:, :m])
        dst = ranker(X, m).rank(ext[:, 1:])
        if w == 1:
            log_start = self.s * phi.log_table[states[:, 0].astype(np.int64)]
            vals = self.s * phi.log_table[ext[:, -1].astype(np.int64)]
        else:
            vals = self.s * phi.log_table[rk_w.rank(ext)]
            log_end = self.s * phi._tails[w - 1][np.arange(S)]
        log_step[src, dst] = vals
        self.log_start, self.log_step, self.log_end = log_start, log_step, log_end
        self.start, self.start_shift = _shifted_exp(log_start)
        self.step, self.step_shift = _shifted_exp(log_step)
        self.end, self.end_shift = _shifted_exp(log_end)

    def total_shift(self, n: int) -> float:
        return self.start_shift + (n - self.m) * self.step_shift + self.end_shift

    def state_image(self, symbol_map: np.ndarray) -> np.ndarray:
        """Images of the states' blocks, shape ``(S, m)``."""
        return np.asarray(symbol_map)[self.states.astype(np.int64)]


def _chunks(total: int, size: int):
    for lo in range(0, total, size):
        yield lo, min(total, lo + size)


def run_chunks(fn: Callable, total: int, chunk: int, threads: int = 1) -> list:
    """Apply ``fn(lo, hi)`` over row chunks; results come back in chunk order."""
    spans = list(_chunks(total, chunk))
    if threads <= 1 or len(spans) <= 1:
        return [fn(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda sp: fn(*sp), spans))


def fiber_log_sums(
    bt: BlockTransfer,
    symbol_map: np.ndarray,
    targets: np.ndarray,
    chunk: int = 1 << 15,
    threads: int = 1,
) -> np.ndarray:
    """``log sum phi(I)**s`` over ``I`` with ``pi(I) = J`` for each row ``J`` of ``targets``.

    Requires ``targets.shape[1] >= bt.m``. Empty fibers give ``-inf``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    NJ, n = targets.shape
    m = bt.m
    if n < m:
        raise ValueError("target words shorter than the state block")
    img = bt.state_image(symbol_map)
    last_img = img[:, -1]

    def work(lo, hi):
        T = targets[lo:hi]
        mask0 = (img[None, :, :] == T[:, None, :m]).all(axis=2)
        alpha = bt.start[None, :] * mask0
        scale = np.zeros(hi - lo)
        for t in range(m, n):
            alpha = (alpha @ bt.step) * (last_img[None, :] == T[:, t : t + 1])
            top = alpha.max(axis=1)
            ok = top > 0
            alpha[ok] /= top[ok, None]
            with np.errstate(divide="ignore"):
                scale += np.log(np.where(ok, top, 0.0))
        z = alpha @ bt.end
        with np.errstate(divide="ignore"):
            return scale + np.log(z)

    parts = run_chunks(work, NJ, chunk, threads)
    out = np.concatenate(parts) if parts else np.zeros(0)
    out = out + bt.total_shift(n)
    out[~np.isfinite(out)] = NEG_INF
    return out


def cesaro_window_masses(
    bt: BlockTransfer,
    symbol_map: np.ndarray,
    targets: np.ndarray,
    log_weights: np.ndarray,
    d: int,
    n_codes: int,
    code_ranker,
    chunk: int = 1 << 14,
    threads: int = 1,
) -> tuple[np.ndarray, float]:
    """Window statistics of the measure ``phi(I)**s / Z_J * exp(log_weights[J])``.

    Only for single-symbol states (``bt.m == 1``). Returns ``Q`` of shape
    ``(n_codes, K, K)`` with ``Q[c, u, v]`` the total, over shifts
    ``i = 0..n-d``, of the mass carried by windows whose image has code ``c``
    and whose first and last symbols are ``u`` and ``v``, divided by the
    interior factor ``prod step``. Also returns the total weight ``sum exp(log_weights)``.
    """
    if bt.m != 1:
        raise ValueError("window masses need single-symbol states")
    targets = np.asarray(targets, dtype=np.int64)
    NJ, n = targets.shape
    K = len(bt.start)
    img = np.asarray(symbol_map)
    step = bt.step

    def work(lo, hi):
        T = targets[lo:hi]
        B = hi - lo
        masks = img[None, None, :] == T[:, :, None]  # (B, n, K)
        alphas = np.empty((n, B, K))
        a_scale = np.zeros((n, B))
        a = bt.start[None, :] * masks[:, 0]
        for t in range(n):
            if t > 0:
                a = (a @ step) * masks[:, t]
            top = a.max(axis=1)
            top = np.where(top > 0, top, 1.0)
            a = a / top[:, None]
            a_scale[t] = (a_scale[t - 1] if t else 0.0) + np.log(top)
            alphas[t] = a
        betas = np.empty((n, B, K))
        b_scale = np.zeros((n, B))
        b = np.broadcast_to(bt.end, (B, K)).copy()
        for t in range(n - 1, -1, -1):
            if t < n - 1:
                b = (b * masks[:, t + 1]) @ step.T
            top = b.max(axis=1)
            top = np.where(top > 0, top, 1.0)
            b = b / top[:, None]
            b_scale[t] = (b_scale[t + 1] if t < n - 1 else 0.0) + np.log(top)
            betas[t] = b
        with np.errstate(divide="ignore"):
            log_z = a_scale[n - 1] + np.log((alphas[n - 1] * bt.end[None, :]).sum(axis=1))
        lw = log_weights[lo:hi] - log_z
        lw[~np.isfinite(lw)] = NEG_INF
        Q = np.zeros(n_codes * K * K)
        for i in range(0, n - d + 1):
            if i == 0:
                left = np.broadcast_to(bt.start, (B, K))
                left_scale = np.zeros(B)
            else:
                left = alphas[i - 1] @ step
                left_scale = a_scale[i - 1]
            right = betas[i + d - 1]
            g = np.exp(lw + left_scale + b_scale[i + d - 1])
            W = (g[:, None, None] * left[:, :, None] * right[:, None, :]).reshape(B, K * K)
            codes = code_ranker.rank(T[:, i : i + d]).astype(np.int64)
            idx = (codes[:, None] * (K * K) + np.arange(K * K)[None, :]).ravel()
            Q += np.bincount(idx, weights=W.ravel(), minlength=n_codes * K * K)
        return Q, float(np.exp(log_weights[lo:hi]).sum())

    parts = run_chunks(work, NJ, chunk, threads)
    Q = np.zeros(n_codes * K * K)
    total = 0.0
    for q, t in parts:
        Q += q
        total += t
    return Q.reshape(n_codes, K, K), total


def interior_factor(bt: BlockTransfer, words: np.ndarray) -> np.ndarray:
    """``prod_t step[I_{t-1}, I_t]`` over the interior of each row (single-symbol states)."""
    words = np.asarray(words, dtype=np.int64)
    out = np.ones(len(words))
    for t in range(1, words.shape[1]):
        out *= bt.step[words[:, t - 1], words[:, t]]
    return out
