"""Subshifts of finite type, their languages, and towers of one-block factor maps.

Words are stored as rows of small integer arrays. The canonical order of
``L_n(X)`` is lexicographic; the position of a word in that order is its
*rank*, and every dense table in the package is indexed by rank.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_WORD_CAP = 50_000_000
DEFAULT_ALPHABET_CAP = 65535


class ResourceCapError(RuntimeError):
    """An enumeration would exceed its configured size cap."""


class ValidationError(ValueError):
    """A structural invariant of an SFT, factor map or chain is violated."""


def _word_dtype(k: int):
    return np.uint8 if k <= 256 else np.int32


class Sft:
    """One-sided subshift of finite type over the alphabet ``0..K-1``.

    Non-essential inputs are normalized on construction by repeatedly
    deleting symbols without a successor or without a predecessor; the
    surviving original indices are kept in ``kept`` and the deletions are
    described in ``normalization_log``.
    """

    def __init__(self, transitions, name: str = ""):
        a = np.asarray(transitions)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValidationError(f"transition matrix must be square and nonempty, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            bad = int(np.argwhere(~np.isin(a, (0, 1)))[0][0])
            raise ValidationError(f"transition matrix row {bad} has entries outside {{0,1}}")
        a = a.astype(bool)
        kept = np.arange(a.shape[0])
        log = []
        while True:
            ok = a.any(axis=1) & a.any(axis=0)
            if ok.all():
                break
            for s in kept[~ok]:
                log.append(f"removed symbol {int(s)} (no successor or no predecessor)")
            kept = kept[ok]
            a = a[np.ix_(ok, ok)]
            if a.shape[0] == 0:
                raise ValidationError("SFT is empty after removing inessential symbols")
        a.setflags(write=False)
        self.matrix = a
        self.kept = tuple(int(s) for s in kept)
        self.normalization_log = tuple(log)
        self.name = name
        if log:
            logger.info("normalized SFT %s: %s", name or "", "; ".join(log))

    # constructors -----------------------------------------------------
    @classmethod
    def full(cls, k: int) -> "Sft":
        return cls(np.ones((k, k), dtype=int), name=f"full{k}")

    @classmethod
    def golden_mean(cls) -> "Sft":
        return cls([[1, 1], [1, 0]], name="golden")

    @classmethod
    def cycle(cls, k: int) -> "Sft":
        a = np.zeros((k, k), dtype=int)
        for i in range(k):
            a[i, (i + 1) % k] = 1
        return cls(a, name=f"cycle{k}")

    # basic properties ---------------------------------------------------
    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_full(self) -> bool:
        return bool(self.matrix.all())

    def successors(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.matrix[s])

    def is_legal(self, word: Sequence[int]) -> bool:
        w = list(word)
        if any(not (0 <= s < self.size) for s in w):
            return False
        return all(self.matrix[w[i], w[i + 1]] for i in range(len(w) - 1))

    def legal_rows(self, words: np.ndarray) -> np.ndarray:
        """Boolean mask of rows of ``words`` that lie in the language."""
        words = np.asarray(words)
        ok = np.ones(len(words), dtype=bool)
        if words.shape[1] == 0:
            return ok
        ok &= (words >= 0).all(axis=1) & (words < self.size).all(axis=1)
        w = np.where(ok[:, None], words, 0)
        for t in range(words.shape[1] - 1):
            ok &= self.matrix[w[:, t], w[:, t + 1]]
        return ok

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Sft{label} K={self.size} edges={int(self.matrix.sum())}>"


def language_size(X: Sft, n: int) -> int:
    """Exact ``|L_n(X)|`` using Python integers."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1
    a = X.matrix.astype(object)
    v = np.ones(X.size, dtype=object)
    for _ in range(n - 1):
        v = a.dot(v)
    return int(sum(v))


def enumerate_language(X: Sft, n: int, cap: int = DEFAULT_WORD_CAP) -> np.ndarray:
    """All words of length ``n`` in lexicographic order, one per row.

    Raises
    ------
    ResourceCapError
        If ``|L_n(X)|`` exceeds ``cap``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    count = language_size(X, n)
    if count > cap:
        raise ResourceCapError(f"|L_{n}| = {count} exceeds the word cap {cap}")
    return _enumerate_cached(X, n)


@functools.lru_cache(maxsize=6)
def _enumerate_cached(X: Sft, n: int) -> np.ndarray:
    dt = _word_dtype(X.size)
    if n == 0:
        out = np.zeros((1, 0), dtype=dt)
        out.setflags(write=False)
        return out
    words = np.arange(X.size, dtype=dt)[:, None]
    succ = [X.successors(s).astype(dt) for s in range(X.size)]
    outdeg = X.matrix.sum(axis=1)
    for _ in range(n - 1):
        last = words[:, -1]
        reps = outdeg[last]
        parents = np.repeat(words, reps, axis=0)
        appended = _gather_succ(last, succ, reps)
        words = np.concatenate([parents, appended[:, None]], axis=1)
    words.setflags(write=False)
    return words


def _gather_succ(last: np.ndarray, succ, reps: np.ndarray) -> np.ndarray:
    # vectorized concatenation of successor lists, preserving parent order
    k = len(succ)
    width = int(reps.max())
    table = np.full((k, width), -1, dtype=np.int64)
    for s in range(k):
        table[s, : len(succ[s])] = succ[s]
    rows = table[last]
    return rows[rows >= 0].astype(succ[0].dtype)


class WordRanker:
    """Maps words of a fixed length to their lexicographic rank in ``L_n(X)``."""

    def __init__(self, X: Sft, n: int):
        self.X = X
        self.n = n
        k = X.size
        # counts[r][b] = number of legal words of length r starting with b
        counts = [np.ones(k, dtype=np.int64)]
        for _ in range(1, max(n, 1)):
            counts.append(X.matrix.astype(np.int64) @ counts[-1])
        # offset[t, prev + 1, x] = sum over b < x with prev -> b of counts[n - t - 1][b]
        allow = np.vstack([np.ones((1, k), dtype=bool), X.matrix])
        self._offset = np.zeros((n, k + 1, k), dtype=np.int64)
        for t in range(n):
            c = counts[n - t - 1]
            contrib = np.where(allow, c[None, :], 0)
            self._offset[t] = np.cumsum(contrib, axis=1) - contrib
        self.size = language_size(X, n)

    def rank(self, words: np.ndarray) -> np.ndarray:
        words = np.asarray(words)
        if words.ndim == 1:
            words = words[None, :]
        if words.shape[1] != self.n:
            raise ValueError(f"expected words of length {self.n}, got {words.shape[1]}")
        if self.n == 0:
            return np.zeros(len(words), dtype=np.int64)
        prev = words[:, 0].astype(np.int64)
        r = self._offset[0, 0, prev].copy()
        for t in range(1, self.n):
            cur = words[:, t].astype(np.int64)
            r += self._offset[t, prev + 1, cur]
            prev = cur
        return r

    def rank_one(self, word: Sequence[int]) -> int:
        return int(self.rank(np.asarray(word, dtype=np.int64)[None, :])[0])


@functools.lru_cache(maxsize=64)
def ranker(X: Sft, n: int) -> WordRanker:
    return WordRanker(X, n)


def specification_gaps(X: Sft) -> tuple[Optional[int], Optional[int]]:
    """Minimal weak and exact specification gaps, decided on symbol pairs.

    ``weak_p`` is the least ``p`` such that every ordered pair of symbols is
    joined by a path of at most ``p + 1`` edges; ``exact_p`` the least ``p``
    with ``A^(p+1)`` strictly positive. ``None`` when no such ``p`` exists.
    """
    k = X.size
    a = X.matrix.astype(np.int64)
    # shortest path with at least one edge, by BFS layers of boolean powers
    dist = np.full((k, k), -1, dtype=np.int64)
    reach = X.matrix.copy()
    power = X.matrix.copy()
    dist[reach] = 1
    for length in range(2, k + 1):
        power = (power.astype(np.int64) @ a) > 0
        new = power & (dist < 0)
        dist[new] = length
    weak = None if (dist < 0).any() else int(dist.max()) - 1

    exact = None
    power = X.matrix.copy()
    bound = (k - 1) ** 2 + 1
    for length in range(1, bound + 1):
        if power.all():
            exact = length - 1
            break
        power = (power.astype(np.int64) @ a) > 0
    return weak, exact


@dataclass(frozen=True)
class HigherBlockRecoding:
    """``X^[m]`` together with word-level encode/decode maps."""

    original: Sft
    m: int
    recoded: Sft
    blocks: np.ndarray  # symbol s of the recoded SFT is the m-block blocks[s]

    def encode(self, words: np.ndarray) -> np.ndarray:
        """Words of length ``n + m - 1`` over X -> words of length ``n``."""
        words = np.atleast_2d(np.asarray(words))
        n = words.shape[1] - self.m + 1
        if n < 1:
            raise ValueError("word shorter than the block length")
        rk = ranker(self.original, self.m)
        out = np.empty((len(words), n), dtype=np.int64)
        for t in range(n):
            out[:, t] = rk.rank(words[:, t : t + self.m])
        return out

    def decode(self, words: np.ndarray) -> np.ndarray:
        words = np.atleast_2d(np.asarray(words))
        first = self.blocks[words[:, 0]]
        rest = self.blocks[words[:, 1:], -1]
        return np.concatenate([first, rest.reshape(len(words), -1)], axis=1)


def higher_block_recode(X: Sft, m: int, alphabet_cap: int = DEFAULT_ALPHABET_CAP) -> HigherBlockRecoding:
    """Higher block presentation of ``X`` with alphabet ``L_m(X)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return HigherBlockRecoding(X, 1, X, np.arange(X.size)[:, None])
    count = language_size(X, m)
    if count > alphabet_cap:
        raise ResourceCapError(f"|L_{m}| = {count} exceeds the alphabet cap {alphabet_cap}")
    blocks = np.asarray(enumerate_language(X, m), dtype=np.int64)
    rk = ranker(X, m)
    a = np.zeros((count, count), dtype=int)
    for u in range(count):
        tail = blocks[u, 1:]
        for b in X.successors(int(blocks[u, -1])):
            v = rk.rank_one(list(tail) + [int(b)])
            a[u, v] = 1
    recoded = Sft(a, name=f"{X.name}[{m}]")
    if len(recoded.kept) != count:
        raise ValidationError("recoding of an essential SFT lost symbols")
    return HigherBlockRecoding(X, m, recoded, blocks)


@dataclass(frozen=True, eq=False)
class FactorMap:
    """One-block map between SFTs given by a symbol map."""

    source: Sft
    target: Sft
    symbol_map: np.ndarray

    def __post_init__(self):
        sm = np.asarray(self.symbol_map, dtype=np.int64)
        if sm.shape != (self.source.size,):
            raise ValidationError(
                f"symbol map has {sm.shape[0] if sm.ndim else 0} entries, source alphabet has {self.source.size}"
            )
        if (sm < 0).any() or (sm >= self.target.size).any():
            raise ValidationError("symbol map points outside the target alphabet")
        sm.setflags(write=False)
        object.__setattr__(self, "symbol_map", sm)

    @classmethod
    def from_original(cls, source: Sft, target: Sft, original_map: Sequence[int]) -> "FactorMap":
        """Build from a map on the un-normalized alphabets of source and target."""
        tgt_index = {orig: i for i, orig in enumerate(target.kept)}
        sm = []
        for orig in source.kept:
            image = int(original_map[orig])
            if image not in tgt_index:
                raise ValidationError(f"symbol {orig} maps to removed target symbol {image}")
            sm.append(tgt_index[image])
        return cls(source, target, np.array(sm))

    def apply(self, words: np.ndarray) -> np.ndarray:
        return self.symbol_map[np.asarray(words, dtype=np.int64)]


def compose_maps(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    return np.asarray(second)[np.asarray(first)]


@dataclass(frozen=True, eq=False)
class FactorChain:
    """Tower ``X_1 -> ... -> X_k`` of one-block maps with weight vector ``a``."""

    levels: tuple
    maps: tuple
    weights: tuple

    def __init__(self, levels: Sequence[Sft], maps: Sequence[FactorMap], weights: Sequence[float]):
        levels = tuple(levels)
        maps = tuple(maps)
        weights = tuple(float(w) for w in weights)
        if len(levels) < 1:
            raise ValidationError("a chain needs at least one level")
        if len(maps) != len(levels) - 1:
            raise ValidationError(f"{len(levels)} levels need {len(levels) - 1} maps, got {len(maps)}")
        if len(weights) != len(levels):
            raise ValidationError(f"{len(levels)} levels need {len(levels)} weights, got {len(weights)}")
        if not weights[0] > 0 or any(w < 0 for w in weights[1:]):
            raise ValidationError(f"weights must satisfy a_1 > 0 and a_i >= 0, got {weights}")
        for i, pm in enumerate(maps):
            if pm.source is not levels[i] or pm.target is not levels[i + 1]:
                raise ValidationError(f"map {i + 1} does not connect level {i + 1} to level {i + 2}")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def single(cls, X: Sft, a1: float = 1.0) -> "FactorChain":
        return cls([X], [], [a1])

    @property
    def k(self) -> int:
        return len(self.levels)

    @property
    def cumulative_weights(self) -> np.ndarray:
        """``A_i = a_1 + ... + a_i`` for ``i = 1..k``."""
        return np.cumsum(self.weights)

    def tau(self, i: int) -> np.ndarray:
        """Symbol map of ``tau_i : X_1 -> X_{i+1}`` (``tau_0`` is the identity)."""
        sm = np.arange(self.levels[0].size)
        for pm in self.maps[:i]:
            sm = compose_maps(sm, pm.symbol_map)
        return sm

    def tail(self) -> "FactorChain":
        """The chain ``X_2 -> ... -> X_k`` with weights ``(a_1 + a_2, a_3, ...)``."""
        if self.k < 2:
            raise ValueError("chain has no tail")
        w = (self.weights[0] + self.weights[1],) + self.weights[2:]
        return FactorChain(self.levels[1:], self.maps[1:], w)


@dataclass
class ValidationReport:
    depth: int
    checked: list = field(default_factory=list)
    log: list = field(default_factory=list)


def validate_chain(chain: FactorChain, depth: int, cap: int = DEFAULT_WORD_CAP) -> ValidationReport:
    """Check transition compatibility and surjectivity up to ``depth``.

    Raises
    ------
    ValidationError
        Naming the first offending transition, symbol or word.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    report = ValidationReport(depth)
    for lvl in chain.levels:
        report.log.extend(lvl.normalization_log)
    for i, pm in enumerate(chain.maps):
        src, tgt, sm = pm.source, pm.target, pm.symbol_map
        for a, b in np.argwhere(src.matrix):
            if not tgt.matrix[sm[a], sm[b]]:
                raise ValidationError(
                    f"map {i + 1}: allowed transition ({a},{b}) goes to forbidden target transition ({sm[a]},{sm[b]})"
                )
        missing = sorted(set(range(tgt.size)) - set(sm.tolist()))
        if missing:
            raise ValidationError(f"map {i + 1}: target symbol {missing[0]} has empty fiber")
        for n in range(2, depth + 1):
            words = enumerate_language(src, n, cap)
            hit = np.zeros(language_size(tgt, n), dtype=bool)
            hit[ranker(tgt, n).rank(sm[words.astype(np.int64)])] = True
            if not hit.all():
                bad = enumerate_language(tgt, n, cap)[int(np.flatnonzero(~hit)[0])]
                raise ValidationError(f"map {i + 1}: target word {bad.tolist()} has empty fiber at depth {n}")
        report.checked.append(f"map {i + 1} surjective on words up to length {depth}")
    return report
