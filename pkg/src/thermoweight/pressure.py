"""Partition sums, certified pressure brackets and the fiber recursion.

The weighted pressure of a chain ``X_1 -> ... -> X_k`` is obtained by folding
the potential level by level::

    phi^(i+1)(J) = ( sum_{pi I = J} phi^(i)(I) ** (1/A_i) ) ** A_i
    phi^(k+1)(n) = sum_J phi^(k)(J) ** (1/A_k)

with ``A_i = a_1 + ... + a_i``, and ``P^a = A_k * lim (1/n) log phi^(k+1)(n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .logspace import NEG_INF, LogValue, group_logsumexp, logsumexp, scale_power
from .potentials import (
    DwConstants,
    LocallyConstantPotential,
    Potential,
    TabulatedPotential,
    estimate_constants,
)
from .symbolic import (
    DEFAULT_WORD_CAP,
    FactorChain,
    FactorMap,
    Sft,
    ValidationError,
    enumerate_language,
    language_size,
    ranker,
    specification_gaps,
)
from .transfer import BlockTransfer, fiber_log_sums


class InvalidConstantsError(ValueError):
    pass


class NoSpecificationError(ValueError):
    """The base level lacks weak specification, so no bracket can be certified."""


@dataclass(frozen=True)
class PressureBracket:
    """``lower <= P <= upper`` at depth ``n`` (certified when the constants are)."""

    n: int
    lower: float
    upper: float
    constants: DwConstants
    width_bound: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def certified(self) -> bool:
        return self.constants.certified

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= x <= self.upper + tol

    def scaled(self, factor: float) -> "PressureBracket":
        return replace(self, lower=self.lower * factor, upper=self.upper * factor, width_bound=self.width_bound * factor)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "lower": self.lower,
            "upper": self.upper,
            "width": self.width,
            "width_bound": self.width_bound,
            "constants": self.constants.as_dict(),
        }


@dataclass(frozen=True)
class FiberTable:
    """``log phi^(i)`` on ``L_n(host)`` indexed by rank."""

    level: int
    depth: int
    host: Sft
    log_values: np.ndarray

    def value(self, word) -> LogValue:
        w = np.asarray(word, dtype=np.int64)
        if len(w) != self.depth or not self.host.is_legal(w):
            return LogValue.zero()
        return LogValue(float(self.log_values[ranker(self.host, self.depth).rank_one(w)]))


# ---------------------------------------------------------------------------
# partition sums


def u_sequence(
    X: Sft,
    phi: Potential,
    n_max: int,
    exponent: float = 1.0,
    cap: int = DEFAULT_WORD_CAP,
) -> list[LogValue]:
    """``u_n = sum over L_n(X) of phi(I) ** exponent`` for ``n = 1..n_max``.

    Locally constant potentials use a transfer pass over ``(w-1)``-blocks;
    other potentials enumerate ``L_n``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if phi.host is not X:
        raise ValueError("potential is hosted on a different SFT")
    out: list[LogValue] = []
    if isinstance(phi, LocallyConstantPotential):
        bt = BlockTransfer(phi, exponent)
        for n in range(1, min(bt.m, n_max + 1)):
            out.append(LogValue(logsumexp(exponent * phi.log_phi_words(enumerate_language(X, n, cap)))))
        alpha = bt.start.copy()
        scale = 0.0
        for n in range(bt.m, n_max + 1):
            if n > bt.m:
                alpha = alpha @ bt.step
            top = alpha.max()
            if top <= 0:
                out.append(LogValue.zero())
                continue
            alpha /= top
            scale += math.log(top)
            out.append(LogValue(scale + math.log(float(alpha @ bt.end)) + bt.total_shift(n)))
        return out
    for n in range(1, n_max + 1):
        logs = phi.log_phi_words(enumerate_language(X, n, cap))
        out.append(LogValue(logsumexp(scale_power(logs, exponent))))
    return out


def pressure_bracket(u: Sequence[LogValue], consts: DwConstants, n: int) -> PressureBracket:
    """Bracket the limit of ``(1/n) log u_n`` from ``u_n`` and the constants.

    ``upper = (log u_n - log c) / n`` and
    ``lower = (log u_n + log c + p log gamma - log(p+1)) / (n + p)``.
    """
    if n < 1 or n > len(u):
        raise ValueError(f"depth {n} outside the computed range 1..{len(u)}")
    if not (math.isfinite(consts.log_c) and math.isfinite(consts.log_gamma)):
        raise InvalidConstantsError("c and gamma must be positive")
    lu = u[n - 1].log
    if not math.isfinite(lu):
        raise InvalidConstantsError(f"u_{n} vanishes")
    p, lc, lg = consts.p, consts.log_c, consts.log_gamma
    upper = (lu - lc) / n
    lower = (lu + lc + p * lg - math.log(p + 1)) / (n + p)
    width_bound = (p * abs(lu / n) + 2 * abs(lc) + p * abs(lg) + math.log(p + 1)) / n
    return PressureBracket(n, lower, upper, consts, width_bound)


# ---------------------------------------------------------------------------
# fiber recursion


def fiber_potential(
    pi: FactorMap,
    source: Union[Potential, FiberTable],
    s: float,
    t: float,
    n: int,
    cap: int = DEFAULT_WORD_CAP,
    threads: int = 1,
    level: int = 2,
) -> FiberTable:
    """``(sum over the fiber of J of source ** s) ** t`` for every ``J`` in ``L_n(target)``.

    Empty fibers give 0. Locally constant sources use the masked transfer
    pass, everything else enumerates ``L_n`` of the source level.
    """
    if s <= 0:
        raise ValueError("exponent s must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    X, Y = pi.source, pi.target
    n_out = language_size(Y, n)
    if isinstance(source, LocallyConstantPotential) and n >= max(source.window - 1, 1):
        if source.host is not X:
            raise ValueError("potential is hosted on a different SFT")
        targets = enumerate_language(Y, n, cap)
        sums = fiber_log_sums(BlockTransfer(source, s), pi.symbol_map, targets, threads=threads)
    else:
        words = enumerate_language(X, n, cap)
        if isinstance(source, FiberTable):
            if source.depth != n or source.host is not X:
                raise ValueError("source table does not match the map's source at this depth")
            logs = source.log_values
        else:
            logs = source.log_phi_words(words)
        image = ranker(Y, n).rank(pi.apply(words))
        sums = group_logsumexp(scale_power(logs, s), image, n_out)
    return FiberTable(level, n, Y, scale_power(sums, t))


def fold_tables(
    chain: FactorChain,
    phi: Potential,
    n: int,
    cap: int = DEFAULT_WORD_CAP,
    threads: int = 1,
) -> tuple[list[FiberTable], float]:
    """Tables ``phi^(2..k)`` at depth ``n`` and ``log phi^(k+1)(n)``."""
    A = chain.cumulative_weights
    tables: list[FiberTable] = []
    if chain.k == 1:
        top = u_sequence(chain.levels[0], phi, n, 1.0 / A[0], cap)[-1].log
        return tables, top
    src: Union[Potential, FiberTable] = phi
    for i, pm in enumerate(chain.maps):
        tab = fiber_potential(pm, src, 1.0 / A[i], A[i], n, cap, threads, level=i + 2)
        tables.append(tab)
        src = tab
    top = logsumexp(scale_power(tables[-1].log_values, 1.0 / A[-1]))
    return tables, top


def _certifying_length(phi: Potential, L: int) -> int:
    if isinstance(phi, LocallyConstantPotential):
        return max(L, phi.window, 2 * phi.window - 2, 2)
    return max(L, 2)


def base_constants(phi: Potential, L: int = 3, mode: str = "weak", cap: int = 20_000_000) -> DwConstants:
    """Constants of ``phi`` on its host with ``p`` = the host's specification gap."""
    weak, exact = specification_gaps(phi.host)
    p = weak if mode == "weak" else exact
    if p is None:
        raise NoSpecificationError(f"host has no {mode} specification")
    return estimate_constants(phi, p, _certifying_length(phi, L), mode, cap)


def top_constants(
    chain: FactorChain,
    phi: Potential,
    L: int = 3,
    cap: int = 20_000_000,
    threads: int = 1,
) -> DwConstants:
    """Constants of the top sequence ``psi = phi^(k) ** (1/A_k)`` on ``X_k``.

    When every level is a full shift and ``phi`` is locally constant, fibers
    are products and the fold keeps ``c`` exactly, so ``c ** (1/A_k)`` is
    certified (``p = 0`` makes ``gamma`` irrelevant). Otherwise the constants
    are finite-depth minima on the folded tables.
    """
    A = chain.cumulative_weights
    weak, _ = specification_gaps(chain.levels[0])
    if weak is None:
        raise NoSpecificationError("X_1 has no weak specification")
    if chain.k == 1:
        return base_constants(phi, L, cap=cap).powered(1.0 / A[0])
    all_full = all(lvl.is_full for lvl in chain.levels)
    p = 0 if all_full else weak
    top = 2 * L + p
    Xk = chain.levels[-1]
    tabs = {0: np.zeros(1)}
    for j in range(1, top + 1):
        tables, _ = fold_tables(chain, phi, j, cap, threads)
        tabs[j] = scale_power(tables[-1].log_values, 1.0 / A[-1])
    est = estimate_constants(TabulatedPotential(Xk, tabs), p, L, "weak", cap)
    if all_full and isinstance(phi, LocallyConstantPotential):
        base = estimate_constants(phi, 0, _certifying_length(phi, L), "weak", cap)
        if base.certified:
            lc = float(base.log_c / A[-1])
            return DwConstants(0, lc, est.log_gamma, est.checked_length, "weak", True, float(base.split_log_c / A[-1]))
    return est


@dataclass
class WeightedPressure:
    """Result of :func:`weighted_pressure`.

    ``bracket`` brackets ``P^a``; ``top_bracket`` brackets the pressure of the
    top sequence, so ``bracket = A_k * top_bracket``.
    """

    chain: FactorChain
    n: int
    bracket: PressureBracket
    top_bracket: PressureBracket
    tables: list
    log_top: float
    constants: DwConstants
    u: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "lower": self.bracket.lower,
            "upper": self.bracket.upper,
            "width": self.bracket.width,
            "width_bound": self.bracket.width_bound,
            "log_top": self.log_top,
            "top_constants": self.constants.as_dict(),
            "certified": self.constants.certified,
        }


def weighted_pressure(
    chain: FactorChain,
    phi: Potential,
    n: int,
    constants: Optional[DwConstants] = None,
    L: int = 3,
    cap: int = DEFAULT_WORD_CAP,
    threads: int = 1,
) -> WeightedPressure:
    """Bracket for the ``a``-weighted pressure of ``phi`` at depth ``n``."""
    if phi.host is not chain.levels[0]:
        raise ValueError("potential must live on the first level of the chain")
    if n < 1:
        raise ValueError("n must be >= 1")
    A = chain.cumulative_weights
    if constants is None:
        constants = top_constants(chain, phi, L, cap=cap, threads=threads)
    if chain.k == 1:
        u = u_sequence(chain.levels[0], phi, n, 1.0 / A[0], cap)
        tables: list = []
        log_top = u[-1].log
    else:
        u = []
        tables = []
        for j in range(1, n + 1):
            tables, top = fold_tables(chain, phi, j, cap, threads)
            u.append(LogValue(top))
        log_top = u[-1].log
    top_br = pressure_bracket(u, constants, n)
    return WeightedPressure(chain, n, top_br.scaled(float(A[-1])), top_br, tables, log_top, constants, u)
