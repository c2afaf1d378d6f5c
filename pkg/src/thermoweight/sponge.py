"""Hausdorff dimension of self-affine Sierpinski sponges.

A sponge on the ``k``-torus is coded by digits ``(d_1, ..., d_k)`` with
``0 <= d_i < m_i`` and ``m_1 <= ... <= m_k``. Its dimension is the weighted
pressure of the zero potential along the tower that drops the last (largest
base) coordinate first, with Kenyon–Peres weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .equilibrium import CylinderTable, equilibrium_measure
from .oracle import closed_form_full_shift
from .potentials import ConstantPotential
from .pressure import NoSpecificationError, PressureBracket, WeightedPressure, weighted_pressure
from .symbolic import (
    DEFAULT_WORD_CAP,
    FactorChain,
    FactorMap,
    Sft,
    ValidationError,
    specification_gaps,
    validate_chain,
)


@dataclass(frozen=True)
class SpongeSpec:
    """Bases, digit set and an optional transition matrix over the digits."""

    bases: tuple
    digits: tuple
    sft: Optional[tuple] = None

    def __init__(self, bases: Sequence[int], digits: Sequence[Sequence[int]], sft=None):
        bases = tuple(int(m) for m in bases)
        digits = tuple(tuple(int(x) for x in dg) for dg in digits)
        if not bases or any(m < 2 for m in bases):
            raise ValidationError("bases must be integers >= 2")
        if any(b < a for a, b in zip(bases, bases[1:])):
            raise ValidationError(f"bases must be nondecreasing, got {list(bases)}")
        if not digits:
            raise ValidationError("digit set is empty")
        if len(set(digits)) != len(digits):
            raise ValidationError("digit set has repeated digits")
        for dg in digits:
            if len(dg) != len(bases) or any(not 0 <= x < m for x, m in zip(dg, bases)):
                raise ValidationError(f"digit {list(dg)} does not fit bases {list(bases)}")
        if sft is not None:
            sft = tuple(tuple(int(v) for v in row) for row in sft)
            if len(sft) != len(digits) or any(len(row) != len(digits) for row in sft):
                raise ValidationError("digit transition matrix must be |D| x |D|")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "digits", digits)
        object.__setattr__(self, "sft", sft)

    @property
    def k(self) -> int:
        return len(self.bases)

    @classmethod
    def sorted_from(cls, bases, digits, sft=None) -> tuple["SpongeSpec", list]:
        """Sort unsorted bases, permuting digit coordinates; returns the permutation used."""
        perm = sorted(range(len(bases)), key=lambda i: (bases[i], i))
        return cls([bases[i] for i in perm], [[dg[i] for i in perm] for dg in digits], sft), perm


def kenyon_peres_weights(bases: Sequence[int]) -> np.ndarray:
    """``a_1 = 1/log m_k`` and ``a_{i+1} = 1/log m_{k-i} - 1/log m_{k-i+1}``."""
    m = [int(b) for b in bases]
    if any(b < 2 for b in m) or any(b < a for a, b in zip(m, m[1:])):
        raise ValidationError("bases must be nondecreasing integers >= 2")
    k = len(m)
    a = [1.0 / math.log(m[k - 1])]
    for i in range(1, k):
        a.append(1.0 / math.log(m[k - 1 - i]) - 1.0 / math.log(m[k - i]))
    return np.array(a)


@dataclass(frozen=True)
class SpongeChain:
    chain: FactorChain
    level_digits: tuple
    validation: object


def build_sponge_chain(spec: SpongeSpec, depth: int = 4, cap: int = DEFAULT_WORD_CAP) -> SpongeChain:
    """Tower over the projections of the digits to their first ``k-1, ..., 1`` coordinates.

    Image levels carry the projected transition relation; the chain is
    validated up to ``depth`` and any surjectivity failure aborts.
    """
    k = spec.k
    D = list(spec.digits)
    if spec.sft is None:
        trans = np.ones((len(D), len(D)), dtype=int)
    else:
        trans = np.asarray(spec.sft, dtype=int)
    X1 = Sft(trans, name="digits")
    if len(X1.kept) != len(D):
        raise ValidationError("digit transition matrix is not essential: " + "; ".join(X1.normalization_log))
    levels = [X1]
    level_digits = [tuple(D)]
    maps = []
    cur_digits, cur_trans = D, trans
    for i in range(1, k):
        proj = sorted({dg[: k - i] for dg in cur_digits})
        index = {p: j for j, p in enumerate(proj)}
        sm = np.array([index[dg[: k - i]] for dg in cur_digits])
        t = np.zeros((len(proj), len(proj)), dtype=int)
        for u, v in np.argwhere(cur_trans):
            t[sm[u], sm[v]] = 1
        Y = Sft(t, name=f"level{i + 1}")
        if len(Y.kept) != len(proj):
            raise ValidationError(f"projected level {i + 1} is not essential")
        maps.append(FactorMap(levels[-1], Y, sm))
        levels.append(Y)
        level_digits.append(tuple(proj))
        cur_digits, cur_trans = proj, t
    chain = FactorChain(levels, maps, kenyon_peres_weights(spec.bases))
    report = validate_chain(chain, depth, cap)
    return SpongeChain(chain, tuple(level_digits), report)


@dataclass
class SpongeResult:
    bracket: PressureBracket
    measure: Optional[CylinderTable]
    sponge: SpongeChain
    pressure: WeightedPressure

    @property
    def weights(self) -> tuple:
        return self.sponge.chain.weights


def sponge_dimension(
    spec: SpongeSpec,
    n: int,
    d: Optional[int] = 2,
    L: int = 3,
    validate_depth: int = 4,
    cap: int = DEFAULT_WORD_CAP,
    threads: int = 1,
) -> SpongeResult:
    """Bracket for ``dim_H`` of the sponge and the depth-``d`` table of its maximizing measure.

    Raises
    ------
    NoSpecificationError
        If the digit subshift lacks weak specification.
    """
    sc = build_sponge_chain(spec, validate_depth, cap)
    chain = sc.chain
    weak, _ = specification_gaps(chain.levels[0])
    if weak is None:
        raise NoSpecificationError("digit subshift has no weak specification; dimension not certified")
    phi = ConstantPotential(chain.levels[0])
    wp = weighted_pressure(chain, phi, n, L=L, cap=cap, threads=threads)
    mu = None
    if d is not None:
        mu = equilibrium_measure(chain, phi, wp, d, cap=cap, threads=threads)
    return SpongeResult(wp.bracket, mu, sc, wp)


def fiber_counts(spec: SpongeSpec) -> np.ndarray:
    """Number of digits above each first coordinate that occurs (two-coordinate sponges)."""
    firsts = sorted({dg[0] for dg in spec.digits})
    return np.array([sum(1 for dg in spec.digits if dg[0] == b) for b in firsts])


def mcmullen_oracle(spec: SpongeSpec) -> float:
    """``log_{m_1} sum_b t_b ** (log m_1 / log m_2)`` for a plain two-coordinate digit set."""
    if spec.k != 2 or spec.sft is not None:
        raise ValidationError("closed form needs two coordinates and a plain digit set")
    m1, m2 = spec.bases
    t = fiber_counts(spec)
    return math.log(float((t ** (math.log(m1) / math.log(m2))).sum())) / math.log(m1)


def mcmullen_via_weights(spec: SpongeSpec) -> float:
    """Same value from the two-level closed form with Kenyon–Peres weights."""
    val, _ = closed_form_full_shift(fiber_counts(spec), kenyon_peres_weights(spec.bases))
    return val
