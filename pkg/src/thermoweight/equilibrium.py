"""Normalized weights, Cesàro approximations of the weighted equilibrium state,
and the Gibbs, mixing, conditional and entropy diagnostics built on them.

``phi_tilde`` assigns to every ``I`` in ``L_n(X_1)``::

    prod_{i<k} [phi^(i)(tau_{i-1} I) / phi^(i+1)(tau_i I)] ** (1/A_i)
        * phi^(k)(tau_{k-1} I) ** (1/A_k) / phi^(k+1)(n)

which sums to 1. Shift-averaging its depth-``d`` window marginals gives
the ``CylinderTable`` approximating the equilibrium state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .logspace import NEG_INF, scale_power
from .potentials import DwConstants, LocallyConstantPotential, Potential
from .pressure import (
    PressureBracket,
    WeightedPressure,
    base_constants,
    fiber_potential,
    weighted_pressure,
)
from .symbolic import (
    DEFAULT_WORD_CAP,
    FactorChain,
    FactorMap,
    Sft,
    enumerate_language,
    language_size,
    ranker,
)
from .transfer import BlockTransfer, cesaro_window_masses, interior_factor


class DepthError(ValueError):
    pass


class InconsistentMarginalError(ValueError):
    pass


class EmptySupportError(ValueError):
    pass


def _xlogx_entropy(m: np.ndarray) -> float:
    m = m[m > 0]
    return float(-(m * np.log(m)).sum())


def format_word(word) -> str:
    return "".join(str(int(s)) for s in word) if all(int(s) < 10 for s in word) else " ".join(str(int(s)) for s in word)


@dataclass(frozen=True)
class CylinderTable:
    """Masses of all words of ``L_depth(host)``, indexed by rank."""

    host: Sft
    depth: int
    masses: np.ndarray
    normalization_error: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.shape != (language_size(self.host, self.depth),):
            raise ValueError("mass array does not match the language size")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @classmethod
    def uniform(cls, host: Sft, depth: int) -> "CylinderTable":
        size = language_size(host, depth)
        return cls(host, depth, np.full(size, 1.0 / size))

    @classmethod
    def point(cls, host: Sft, word) -> "CylinderTable":
        w = np.asarray(word)
        m = np.zeros(language_size(host, len(w)))
        m[ranker(host, len(w)).rank_one(w)] = 1.0
        return cls(host, len(w), m)

    def words(self) -> np.ndarray:
        return enumerate_language(self.host, self.depth)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def mass(self, word) -> float:
        w = np.asarray(word, dtype=np.int64)
        if len(w) > self.depth:
            raise DepthError("word longer than the table depth")
        if not self.host.is_legal(w):
            return 0.0
        return float(self.marginal(len(w)).masses[ranker(self.host, len(w)).rank_one(w)])

    def marginal(self, j: int, suffix: bool = False) -> "CylinderTable":
        """Prefix (or suffix) marginal at depth ``j <= depth``."""
        if not 0 <= j <= self.depth:
            raise DepthError(f"marginal depth {j} outside 0..{self.depth}")
        if j == self.depth:
            return self
        words = self.words()
        part = words[:, self.depth - j :] if suffix else words[:, :j]
        r = ranker(self.host, j).rank(part)
        m = np.bincount(r, weights=self.masses, minlength=language_size(self.host, j))
        return CylinderTable(self.host, j, m, self.normalization_error)

    def pushforward(self, symbol_map, target: Sft) -> "CylinderTable":
        words = np.asarray(symbol_map)[self.words().astype(np.int64)]
        legal = target.legal_rows(words)
        if not legal[self.masses > 0].all():
            raise ValueError("symbol map sends charged words outside the target language")
        r = ranker(target, self.depth).rank(np.where(legal[:, None], words, 0))
        m = np.bincount(r[legal], weights=self.masses[legal], minlength=language_size(target, self.depth))
        return CylinderTable(target, self.depth, m, self.normalization_error)

    def block_entropy(self, j: int) -> float:
        return _xlogx_entropy(self.marginal(j).masses)

    def stationarity_defect(self) -> float:
        """L1 distance between the prefix and suffix marginals one level down."""
        if self.depth < 2:
            return 0.0
        a = self.marginal(self.depth - 1).masses
        b = self.marginal(self.depth - 1, suffix=True).masses
        return float(np.abs(a - b).sum())

    def rows(self) -> list[tuple[int, str, float]]:
        return [(self.depth, format_word(w), float(m)) for w, m in zip(self.words(), self.masses)]


@dataclass(frozen=True)
class PhiTildeTable:
    """``log phi_tilde`` on ``L_n(X_1)`` indexed by rank."""

    host: Sft
    depth: int
    log_values: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def total(self) -> float:
        return float(np.exp(self.log_values).sum())

    def words(self) -> np.ndarray:
        return enumerate_language(self.host, self.depth)


@dataclass(frozen=True)
class EnvelopeTable:
    """Grid maxima ``f*(I) = max f_{m,l}(I)`` over the available depths."""

    host: Sft
    depth: int
    values: np.ndarray
    grid: tuple


# ---------------------------------------------------------------------------
# normalized weights


@dataclass(frozen=True)
class _LevelTwo:
    target: Sft
    symbol_map: np.ndarray
    words: np.ndarray
    log_psi: np.ndarray
    log_fiber: np.ndarray


def _level_two(chain: FactorChain, wp: WeightedPressure, cap: int) -> _LevelTwo:
    """Words ``J`` of the second level with ``log psi_tilde(J)`` and ``log phi^(2)(J)``.

    A one-level chain gets a virtual one-point second level, which makes
    ``psi_tilde = 1`` and ``phi^(2) = phi^(2)(n) ** a_1``.
    """
    n = wp.n
    A = chain.cumulative_weights
    if chain.k == 1:
        point = Sft.full(1)
        return _LevelTwo(
            point,
            np.zeros(chain.levels[0].size, dtype=np.int64),
            np.zeros((1, n), dtype=np.uint8),
            np.zeros(1),
            np.array([A[0] * wp.log_top]),
        )
    if not wp.tables or wp.tables[0].depth != n:
        raise DepthError("fiber tables are missing or at the wrong depth")
    k = chain.k
    words = enumerate_language(chain.levels[1], n, cap)
    cur = words
    rank_at = [np.arange(len(words))]
    for i in range(2, k):
        cur = chain.maps[i - 1].apply(cur)
        rank_at.append(ranker(chain.levels[i], n).rank(cur))
    # rank_at[j] indexes level j + 2, whose table is wp.tables[j]
    log_psi = np.zeros(len(words))
    bad = np.zeros(len(words), dtype=bool)
    for j in range(k - 2):
        here = wp.tables[j].log_values[rank_at[j]]
        nxt = wp.tables[j + 1].log_values[rank_at[j + 1]]
        bad |= ~np.isfinite(here) | ~np.isfinite(nxt)
        with np.errstate(invalid="ignore"):
            log_psi += (here - nxt) / A[j + 1]
    last = wp.tables[k - 2].log_values[rank_at[k - 2]]
    bad |= ~np.isfinite(last)
    with np.errstate(invalid="ignore"):
        log_psi += last / A[k - 1] - wp.log_top
    log_psi[bad] = NEG_INF
    return _LevelTwo(chain.levels[1], np.asarray(chain.maps[0].symbol_map), words, log_psi, wp.tables[0].log_values)


def phi_tilde(
    chain: FactorChain,
    phi: Potential,
    wp: WeightedPressure,
    n: Optional[int] = None,
    cap: int = DEFAULT_WORD_CAP,
) -> PhiTildeTable:
    """Exact normalized weights on ``L_n(X_1)`` from the fiber tables in ``wp``."""
    if n is not None and n != wp.n:
        raise DepthError(f"tables were computed at depth {wp.n}, not {n}")
    n = wp.n
    lv = _level_two(chain, wp, cap)
    X = chain.levels[0]
    a1 = chain.weights[0]
    words = enumerate_language(X, n, cap)
    log_phi = phi.log_phi_words(words)
    if chain.k == 1:
        r = np.zeros(len(words), dtype=np.int64)
    else:
        r = ranker(lv.target, n).rank(lv.symbol_map[words.astype(np.int64)])
    fib = lv.log_fiber[r]
    ok = np.isfinite(log_phi) & np.isfinite(fib) & np.isfinite(lv.log_psi[r])
    out = np.full(len(words), NEG_INF)
    out[ok] = (log_phi[ok] - fib[ok]) / a1 + lv.log_psi[r][ok]
    return PhiTildeTable(X, n, out)


# ---------------------------------------------------------------------------
# Cesàro averages


def _check_depths(n: int, d: int):
    if d < 1 or 2 * d > n:
        raise DepthError(f"need 1 <= d <= n/2, got n={n}, d={d}")


def shift_window_sums(X: Sft, words: np.ndarray, weights: np.ndarray, d: int, starts) -> list[np.ndarray]:
    """``sum of weights`` of words grouped by their length-``d`` window at each start."""
    rk = ranker(X, d)
    size = language_size(X, d)
    return [np.bincount(rk.rank(words[:, i : i + d]), weights=weights, minlength=size) for i in starts]


def cesaro_from_weights(X: Sft, words: np.ndarray, weights: np.ndarray, d: int) -> CylinderTable:
    """Average of the depth-``d`` window laws over shifts ``0..n-d``, renormalized."""
    n = words.shape[1]
    _check_depths(n, d)
    acc = np.zeros(language_size(X, d))
    for part in shift_window_sums(X, words, weights, d, range(n - d + 1)):
        acc += part
    acc /= n
    total = float(acc.sum())
    if total <= 0:
        raise EmptySupportError("all weights vanish")
    return CylinderTable(X, d, acc / total, 1.0 - total / float(np.sum(weights)))


def cesaro_measure(pt: PhiTildeTable, d: int) -> CylinderTable:
    """Cesàro window average of ``phi_tilde`` at depth ``d``.

    ``normalization_error`` holds the dropped boundary mass ``(d-1)/n``.
    """
    return cesaro_from_weights(pt.host, pt.words(), pt.values, d)


def _fast_path_ok(phi: Potential) -> bool:
    return isinstance(phi, LocallyConstantPotential) and phi.window <= 2


def equilibrium_measure(
    chain: FactorChain,
    phi: Potential,
    wp: WeightedPressure,
    d: int,
    method: str = "auto",
    cap: int = DEFAULT_WORD_CAP,
    threads: int = 1,
) -> CylinderTable:
    """Depth-``d`` Cesàro table of the weighted equilibrium state at depth ``wp.n``.

    ``method="transfer"`` avoids enumerating ``L_n(X_1)``: it runs masked
    forward/backward passes over the fibers of each second-level word
    (potentials of window at most 2). ``method="table"`` materializes
    ``phi_tilde``. ``auto`` picks the transfer pass when it applies.
    """
    n = wp.n
    _check_depths(n, d)
    if method not in ("auto", "transfer", "table"):
        raise ValueError("method must be auto, transfer or table")
    if method == "table" or (method == "auto" and not _fast_path_ok(phi)):
        return cesaro_measure(phi_tilde(chain, phi, wp, cap=cap), d)
    if not _fast_path_ok(phi):
        raise ValueError("transfer path needs a locally constant potential of window <= 2")
    lv = _level_two(chain, wp, cap)
    X = chain.levels[0]
    bt = BlockTransfer(phi, 1.0 / chain.weights[0])
    Q, _ = cesaro_window_masses(
        bt, lv.symbol_map, lv.words, lv.log_psi, d, language_size(lv.target, d), ranker(lv.target, d), threads=threads
    )
    words = enumerate_language(X, d, cap).astype(np.int64)
    codes = ranker(lv.target, d).rank(lv.symbol_map[words])
    mass = Q[codes, words[:, 0], words[:, -1]] * interior_factor(bt, words) / n
    total = float(mass.sum())
    if total <= 0:
        raise EmptySupportError("all weights vanish")
    return CylinderTable(X, d, mass / total, 1.0 - total)


# ---------------------------------------------------------------------------
# envelope and Gibbs diagnostics


def envelope(tables: Union[PhiTildeTable, Sequence[PhiTildeTable]], d: int) -> EnvelopeTable:
    """``f*(I)`` as the maximum of ``f_{m,l}(I)`` over all ``m + l + d`` equal to a table depth.

    Including the depth-``d`` table contributes ``f_{0,0} = f``.
    """
    if isinstance(tables, PhiTildeTable):
        tables = [tables]
    if not tables:
        raise DepthError("no tables given")
    X = tables[0].host
    deepest = max(t.depth for t in tables)
    if d > deepest - 2 and not any(t.depth == d for t in tables):
        raise DepthError(f"need d <= n - 2, got n={deepest}, d={d}")
    best = np.zeros(language_size(X, d))
    grid = []
    for t in sorted(tables, key=lambda t: t.depth):
        if t.depth < d:
            continue
        words, w = t.words(), t.values
        starts = range(t.depth - d + 1)
        for m, part in zip(starts, shift_window_sums(X, words, w, d, starts)):
            best = np.maximum(best, part)
            grid.append((m, t.depth - d - m))
    return EnvelopeTable(X, d, best, tuple(grid))


@dataclass(frozen=True)
class GibbsReport:
    depth: int
    min_ratio: float
    max_ratio: float
    support: int

    @property
    def spread(self) -> float:
        return self.max_ratio / self.min_ratio


def gibbs_reference(phi: Potential, P: PressureBracket, d: int, scale: float = 1.0) -> np.ndarray:
    """``exp(-d P) phi(I) ** scale`` on ``L_d`` with ``P`` the bracket midpoint."""
    logs = scale_power(phi.log_phi_words(enumerate_language(phi.host, d)), scale)
    mid = 0.5 * (P.lower + P.upper)
    return np.exp(logs - d * mid)


def gibbs_diagnostic(mu: CylinderTable, reference) -> GibbsReport:
    """Extremes of ``mu(I) / reference(I)`` over words charged by both."""
    if isinstance(reference, (EnvelopeTable, CylinderTable)):
        ref = reference.values if isinstance(reference, EnvelopeTable) else reference.masses
        if reference.depth != mu.depth:
            raise DepthError("reference depth differs from the measure depth")
    elif isinstance(reference, PhiTildeTable):
        if reference.depth != mu.depth:
            raise DepthError("reference depth differs from the measure depth")
        ref = reference.values
    else:
        ref = np.asarray(reference, dtype=float)
    if ref.shape != mu.masses.shape:
        raise DepthError("reference does not match the measure's language")
    ok = (mu.masses > 0) & (ref > 0)
    if not ok.any():
        raise EmptySupportError("no word is charged by both tables")
    r = mu.masses[ok] / ref[ok]
    return GibbsReport(mu.depth, float(r.min()), float(r.max()), int(ok.sum()))


@dataclass(frozen=True)
class GibbsTrend:
    reports: tuple
    bound: float

    @property
    def spreads(self) -> list:
        return [r.spread for r in self.reports]

    @property
    def drifting(self) -> bool:
        s = self.spreads
        return len(s) >= 3 and all(b > 1.05 * a for a, b in zip(s, s[1:]))

    @property
    def passed(self) -> bool:
        return max(self.spreads) <= self.bound and not self.drifting


def gibbs_trend(reports: Sequence[GibbsReport], bound: float = 10.0) -> GibbsTrend:
    """Bounded spread with no steady growth across depths."""
    if not reports:
        raise EmptySupportError("no reports")
    return GibbsTrend(tuple(reports), bound)


# ---------------------------------------------------------------------------
# mixing


@dataclass(frozen=True)
class MixingReport:
    gaps: tuple
    ratios: tuple
    p: int
    exact: bool

    @property
    def min_ratio(self) -> float:
        return min(self.ratios)

    @property
    def decaying(self) -> bool:
        r = self.ratios
        return len(r) >= 3 and all(b < a for a, b in zip(r, r[1:]))


def mixing_diagnostic(
    mu: CylinderTable,
    A: Sequence[int],
    B: Sequence[int],
    p: int,
    gaps: Sequence[int],
    exact: bool = False,
) -> MixingReport:
    """``sum_{i=0..p} mu(A and sigma^{-(g+i)} B) / (mu(A) mu(B))`` for each gap ``g``.

    ``exact=True`` keeps only the ``i = 0`` term.
    """
    A = [int(s) for s in A]
    B = [int(s) for s in B]
    gaps = [int(g) for g in gaps]
    terms = 1 if exact else p + 1
    need = max([len(A)] + [g + terms - 1 + len(B) for g in gaps])
    if need > mu.depth:
        raise DepthError(f"table depth {mu.depth} < required {need}")
    X = mu.host
    tab = mu.marginal(need)
    words = tab.words()
    in_a = (words[:, : len(A)] == np.asarray(A)).all(axis=1)
    mA, mB = mu.mass(A), mu.mass(B)
    if mA <= 0 or mB <= 0:
        raise EmptySupportError("A or B has zero mass")
    ratios = []
    for g in gaps:
        tot = 0.0
        for i in range(terms):
            pos = g + i
            in_b = (words[:, pos : pos + len(B)] == np.asarray(B)).all(axis=1)
            tot += float(tab.masses[in_a & in_b].sum())
        ratios.append(tot / (mA * mB))
    return MixingReport(tuple(gaps), tuple(ratios), 0 if exact else p, exact)


# ---------------------------------------------------------------------------
# entropy and objective


@dataclass
class LevelEntropy:
    level: int
    block: list
    conditional: list

    @property
    def upper(self) -> float:
        return float(min(min(self.block), min(self.conditional)))

    def as_dict(self) -> dict:
        return {"level": self.level, "block": self.block, "conditional": self.conditional, "upper": self.upper}


@dataclass
class ObjectiveReport:
    depth: int
    levels: list
    potential_average: float
    potential_upper: float
    objective_upper: float
    slack: float
    stationarity_defect: float
    tables: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "depth": self.depth,
            "levels": [lv.as_dict() for lv in self.levels],
            "potential_average": self.potential_average,
            "potential_upper": self.potential_upper,
            "objective_upper": self.objective_upper,
            "slack": self.slack,
            "stationarity_defect": self.stationarity_defect,
        }


def level_entropy(table: CylinderTable, level: int) -> LevelEntropy:
    H = [table.block_entropy(j) for j in range(table.depth + 1)]
    block = [H[j] / j for j in range(1, table.depth + 1)]
    cond = [H[j] - H[j - 1] for j in range(1, table.depth + 1)]
    return LevelEntropy(level, block, cond)


def potential_average(mu: CylinderTable, phi: Potential) -> float:
    logs = phi.log_phi_words(mu.words())
    charged = mu.masses > 0
    if not np.isfinite(logs[charged]).all():
        return NEG_INF
    return float((mu.masses[charged] * logs[charged]).sum() / mu.depth)


def potential_upper(mu: CylinderTable, phi: Potential, log_c_split: float = 0.0) -> float:
    """Upper estimate of ``Phi_*(mu)`` from a depth-``d`` table.

    The Fekete bound ``(int log phi_j dmu - log c_split) / j`` holds for every
    ``j``; the best ``j <= d`` is taken. A locally constant potential with
    ``w <= d`` also admits the window mean ``sum mu(W) f(W)``, which is the
    exact value for a stationary table.
    """
    best = min(potential_average(mu.marginal(j), phi) - log_c_split / j for j in range(1, mu.depth + 1))
    if isinstance(phi, LocallyConstantPotential) and phi.window <= mu.depth:
        win = mu.marginal(phi.window)
        charged = win.masses > 0
        best = min(best, float((win.masses[charged] * phi.log_table[charged]).sum()))
    return float(best)


def entropy_and_objective(
    chain: FactorChain,
    mu: CylinderTable,
    phi: Potential,
    constants: Optional[DwConstants] = None,
    tol: float = 1e-9,
) -> ObjectiveReport:
    """Upper estimates of ``Phi_*(mu) + sum_i a_i h(mu o tau_{i-1}^-1)``.

    Entropies use the smaller of ``H_j / j`` and ``H_j - H_{j-1}`` over
    ``j <= d``; the potential term comes from :func:`potential_upper`.
    """
    if mu.host is not chain.levels[0]:
        raise ValueError("measure must live on the first level")
    if (mu.masses < -tol).any() or abs(mu.total - 1.0) > tol:
        raise InconsistentMarginalError(f"table is not a probability vector (total {mu.total!r})")
    if constants is None:
        constants = base_constants(phi)
    levels, tables = [], []
    for i in range(chain.k):
        tab = mu if i == 0 else mu.pushforward(chain.tau(i), chain.levels[i])
        tables.append(tab)
        levels.append(level_entropy(tab, i + 1))
    pavg = potential_average(mu, phi)
    pup = potential_upper(mu, phi, constants.split_log_c)
    obj = pup + sum(a * lv.upper for a, lv in zip(chain.weights, levels))
    slack = sum(a * abs(lv.block[-1] - lv.conditional[-1]) for a, lv in zip(chain.weights, levels))
    slack += -constants.split_log_c / mu.depth
    return ObjectiveReport(mu.depth, levels, pavg, pup, float(obj), float(slack), mu.stationarity_defect(), tables)


# ---------------------------------------------------------------------------
# conditional equilibrium


@dataclass
class ConditionalResult:
    measure: CylinderTable
    potential_average: float
    h_mu: float
    h_nu: float
    relative_value: float
    lhs: float
    gap: float
    estimator_gap: float

    def as_dict(self) -> dict:
        return {
            "potential_average": self.potential_average,
            "h_mu": self.h_mu,
            "h_nu": self.h_nu,
            "relative_value": self.relative_value,
            "lhs": self.lhs,
            "gap": self.gap,
            "estimator_gap": self.estimator_gap,
            "normalization_error": self.measure.normalization_error,
        }


def conditional_equilibrium(
    pi: FactorMap,
    phi: Potential,
    nu: CylinderTable,
    d: int,
    cap: int = DEFAULT_WORD_CAP,
    threads: int = 1,
) -> ConditionalResult:
    """Equilibrium of ``phi`` relative to ``nu`` on the factor.

    Builds ``eta_n(I) = nu(pi I) phi(I) / psi(pi I)`` with ``psi`` the fiber
    sum of ``phi``, averages it over shifts, and compares
    ``Phi_*(mu) + h(mu) - h(nu)`` with ``Psi_*(nu)``, each estimated at depth ``d``.
    """
    X, Y = pi.source, pi.target
    if nu.host is not Y:
        raise ValueError("nu must live on the target of the map")
    if phi.host is not X:
        raise ValueError("potential must live on the source of the map")
    n = nu.depth
    _check_depths(n, d)
    psi = fiber_potential(pi, phi, 1.0, 1.0, n, cap, threads).log_values
    charged = nu.masses > 0
    if not np.isfinite(psi[charged]).all():
        raise EmptySupportError("nu charges a word whose fiber carries no phi mass")
    words = enumerate_language(X, n, cap)
    r = ranker(Y, n).rank(pi.apply(words))
    log_phi = phi.log_phi_words(words)
    with np.errstate(divide="ignore"):
        log_nu = np.log(nu.masses)
    ok = np.isfinite(log_phi) & np.isfinite(log_nu[r])
    eta = np.zeros(len(words))
    eta[ok] = np.exp(log_nu[r][ok] + log_phi[ok] - psi[r][ok])
    mu = cesaro_from_weights(X, words, eta, d)

    ent_mu = level_entropy(mu, 1)
    nu_d = nu.marginal(d)
    ent_nu = level_entropy(nu_d, 2)
    pavg = potential_average(mu, phi)
    psi_d = fiber_potential(pi, phi, 1.0, 1.0, d, cap, threads).log_values
    nz = nu_d.masses > 0
    rel = float((nu_d.masses[nz] * psi_d[nz]).sum() / d)
    h_mu, h_nu = ent_mu.conditional[-1], ent_nu.conditional[-1]
    lhs = pavg + h_mu - h_nu
    est_gap = abs(ent_mu.block[-1] - h_mu) + abs(ent_nu.block[-1] - h_nu)
    return ConditionalResult(mu, pavg, h_mu, h_nu, rel, lhs, abs(lhs - rel), est_gap)
