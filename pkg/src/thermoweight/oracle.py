"""Independent reference computations for small instances.

Markov measures with exact entropy, closed forms for product towers of full
shifts, Parry measures from Perron data, a brute-force Cesàro average, and a
sweep of competitor measures against a pressure bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .equilibrium import CylinderTable, entropy_and_objective
from .potentials import DwConstants, Potential
from .pressure import PressureBracket
from .symbolic import FactorChain, Sft, enumerate_language, ranker


class NonStationaryError(ValueError):
    pass


def _stationary(P: np.ndarray) -> np.ndarray:
    """Stationary law of a row-stochastic matrix; must be unique."""
    S = P.shape[0]
    M = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if np.abs(M @ pi - rhs).max() > 1e-9:
        raise NonStationaryError("no stationary law")
    vals = np.linalg.eigvals(P)
    if np.sum(np.abs(vals - 1.0) < 1e-9) > 1:
        raise NonStationaryError("stationary law is not unique; pass the initial law explicitly")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


class MarkovMeasure:
    """Order-``m`` Markov measure on an SFT.

    ``kernel[r, j]`` is the probability of symbol ``j`` after the word of rank
    ``r`` in ``L_m(host)``. With ``m = 0`` the kernel has a single row
    (a Bernoulli measure). The initial law on ``L_m`` is solved for when not
    given and checked for stationarity when given.
    """

    def __init__(self, host: Sft, order: int, kernel, initial=None, tol: float = 1e-9):
        if order < 0:
            raise ValueError("order must be >= 0")
        K = host.size
        P = np.asarray(kernel, dtype=float)
        states = enumerate_language(host, order)
        S = len(states)
        if P.shape != (S, K):
            raise ValueError(f"kernel must have shape {(S, K)}, got {P.shape}")
        if (P < -tol).any() or np.abs(P.sum(axis=1) - 1.0).max() > tol:
            raise ValueError("kernel rows must be probability vectors")
        P = np.clip(P, 0.0, None)
        # legal support: extending the state by j must stay in the language
        if order > 0:
            legal = host.matrix[states[:, -1].astype(np.int64)]
        else:
            support = P[0] > 0
            legal = np.broadcast_to(support, (1, K)).copy()
            if not host.matrix[np.ix_(support, support)].all():
                raise ValueError("Bernoulli support contains a forbidden transition")
        if (P[~legal] > tol).any():
            raise ValueError("kernel charges a forbidden transition")
        self.host, self.order, self.kernel, self.states = host, order, P, states
        step = self._state_matrix()
        if initial is None:
            init = _stationary(step)
        else:
            init = np.asarray(initial, dtype=float)
            if init.shape != (S,) or abs(init.sum() - 1.0) > tol:
                raise ValueError("initial law must be a probability vector on L_m")
            if np.abs(init @ step - init).max() > tol:
                raise NonStationaryError("initial law is not stationary under the kernel")
        self.initial = init

    def _state_matrix(self) -> np.ndarray:
        S = len(self.states)
        if self.order == 0:
            return np.ones((1, 1))
        rk = ranker(self.host, self.order)
        M = np.zeros((S, S))
        for r, st in enumerate(self.states):
            for j in np.flatnonzero(self.kernel[r] > 0):
                nxt = list(st[1:]) + [int(j)]
                M[r, rk.rank_one(nxt)] += self.kernel[r, j]
        return M

    @classmethod
    def bernoulli(cls, host: Sft, probs) -> "MarkovMeasure":
        return cls(host, 0, np.asarray(probs, dtype=float)[None, :])

    @classmethod
    def random(cls, host: Sft, order: int, rng: np.random.Generator, concentration: float = 1.0) -> "MarkovMeasure":
        """Dirichlet rows on the legal successors of each state."""
        states = enumerate_language(host, order)
        K = host.size
        P = np.zeros((len(states), K))
        for r, st in enumerate(states):
            succ = np.arange(K) if order == 0 else host.successors(int(st[-1]))
            if order == 0 and not host.is_full:
                raise ValueError("random Bernoulli candidates need a full shift")
            P[r, succ] = rng.dirichlet(np.full(len(succ), concentration))
        return cls(host, order, P)


def markov_entropy(mu: MarkovMeasure) -> float:
    """``-sum_b p(b) sum_j P(b, j) log P(b, j)``."""
    P = mu.kernel
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-(mu.initial * terms.sum(axis=1)).sum())


def cylinder_table(mu: MarkovMeasure, d: int) -> CylinderTable:
    """Exact masses of all words of ``L_d``."""
    X, m = mu.host, mu.order
    depth = max(d, m)
    words = enumerate_language(X, depth).astype(np.int64)
    if m == 0:
        mass = np.prod(mu.kernel[0][words], axis=1) if depth else np.ones(1)
    else:
        rk = ranker(X, m)
        mass = mu.initial[rk.rank(words[:, :m])].copy()
        for t in range(m, depth):
            mass *= mu.kernel[rk.rank(words[:, t - m : t]), words[:, t]]
    tab = CylinderTable(X, depth, mass)
    return tab.marginal(d)


def parry_measure(X: Sft) -> MarkovMeasure:
    """Measure of maximal entropy from the Perron eigendata of the transition matrix."""
    A = X.matrix.astype(float)
    vals, right = np.linalg.eig(A)
    i = int(np.argmax(vals.real))
    lam = float(vals[i].real)
    r = np.abs(right[:, i].real)
    valsT, left = np.linalg.eig(A.T)
    l = np.abs(left[:, int(np.argmax(valsT.real))].real)
    P = A * r[None, :] / (lam * r[:, None])
    init = l * r / float(l @ r)
    return MarkovMeasure(X, 1, P, init)


def closed_form_full_shift(fiber_sizes: Sequence[float], a: Sequence[float]) -> tuple[float, np.ndarray]:
    """Weighted pressure of the constant potential on a two-level product of full shifts.

    With ``A = a1 + a2`` and ``Z = sum_b N_b ** (a1/A)`` the value is ``A log Z``.
    The second return value holds, for each fiber ``b``, the Bernoulli weight
    ``N_b ** (a1/A - 1) / Z`` carried by each symbol above ``b``.
    """
    N = np.asarray(fiber_sizes, dtype=float)
    a1, a2 = float(a[0]), float(a[1])
    if (N <= 0).any() or a1 <= 0 or a2 < 0:
        raise ValueError("need positive fiber sizes, a1 > 0, a2 >= 0")
    A = a1 + a2
    Z = float((N ** (a1 / A)).sum())
    return A * math.log(Z), N ** (a1 / A - 1.0) / Z


def symbol_weights(fiber_sizes: Sequence[int], a: Sequence[float]) -> np.ndarray:
    """Per-symbol equilibrium weights, symbols listed fiber by fiber."""
    _, w = closed_form_full_shift(fiber_sizes, a)
    return np.repeat(w, np.asarray(fiber_sizes, dtype=int))


def closed_form_three_level(parents_1: Sequence[int], parents_2: Sequence[int], a: Sequence[float]) -> float:
    """Three-level product of full shifts by composing the two-level closed form twice.

    ``parents_1[x]`` is the level-2 image of symbol ``x``; ``parents_2[y]`` the
    level-3 image of ``y``. For each level-3 symbol ``z`` the inner closed form
    over the level-2 symbols above ``z`` equals ``A_2 log M_z``; the outer
    closed form with fiber sizes ``M_z`` and weights ``(A_2, a_3)`` finishes.
    """
    a1, a2, a3 = map(float, a)
    A2 = a1 + a2
    p1 = np.asarray(parents_1)
    p2 = np.asarray(parents_2)
    n_y = np.bincount(p1, minlength=len(p2)).astype(float)
    M = []
    for z in range(int(p2.max()) + 1):
        ys = np.flatnonzero(p2 == z)
        val, _ = closed_form_full_shift(n_y[ys], (a1, a2))
        M.append(math.exp(val / A2))
    val, _ = closed_form_full_shift(M, (A2, a3))
    return val


def brute_force_cesaro(weights: dict, n: int, d: int) -> dict:
    """Cesàro window average of a word-indexed weight dict, by explicit shifting.

    ``weights`` maps length-``n`` tuples to nonnegative reals; the result maps
    length-``d`` tuples to masses renormalized to total 1.
    """
    acc: dict = {}
    for word, w in weights.items():
        for i in range(n - d + 1):
            key = tuple(word[i : i + d])
            acc[key] = acc.get(key, 0.0) + w / n
    total = sum(acc.values())
    return {k: v / total for k, v in acc.items()}


@dataclass
class SweepReport:
    seed: Optional[int]
    objectives: list
    pressure_upper: float
    pressure_lower: float
    equilibrium_objective: Optional[float] = None
    equilibrium_slack: Optional[float] = None
    tolerance: float = 1e-9
    details: list = field(default_factory=list, repr=False)

    @property
    def max_objective(self) -> float:
        return max(self.objectives) if self.objectives else -math.inf

    @property
    def dominated(self) -> bool:
        return self.max_objective <= self.pressure_upper + self.tolerance

    @property
    def attained(self) -> Optional[bool]:
        if self.equilibrium_objective is None:
            return None
        return self.equilibrium_objective >= self.pressure_lower - self.equilibrium_slack - self.tolerance

    @property
    def passed(self) -> bool:
        return self.dominated and self.attained is not False

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "candidates": len(self.objectives),
            "max_objective": self.max_objective,
            "pressure_upper": self.pressure_upper,
            "pressure_lower": self.pressure_lower,
            "equilibrium_objective": self.equilibrium_objective,
            "equilibrium_slack": self.equilibrium_slack,
            "dominated": self.dominated,
            "attained": self.attained,
            "passed": self.passed,
        }


def candidate_objective(chain: FactorChain, phi: Potential, mu: MarkovMeasure, d: int, constants: DwConstants) -> float:
    """Exact level-1 entropy plus upper estimates for the pushforwards and the potential term."""
    rep = entropy_and_objective(chain, cylinder_table(mu, d), phi, constants)
    pushed = sum(a * lv.upper for a, lv in zip(chain.weights[1:], rep.levels[1:]))
    return rep.potential_upper + chain.weights[0] * markov_entropy(mu) + pushed


def variational_sweep(
    chain: FactorChain,
    phi: Potential,
    candidates: Sequence[MarkovMeasure],
    d: int,
    P: PressureBracket,
    constants: DwConstants,
    equilibrium: Optional[CylinderTable] = None,
    seed: Optional[int] = None,
    tol: float = 1e-9,
) -> SweepReport:
    """Check that no candidate's objective exceeds ``P.upper`` and that the equilibrium reaches ``P.lower``."""
    objs = [candidate_objective(chain, phi, mu, d, constants) for mu in candidates]
    rep = SweepReport(seed, objs, P.upper, P.lower, tolerance=tol)
    if equilibrium is not None:
        er = entropy_and_objective(chain, equilibrium, phi, constants)
        rep.equilibrium_objective = er.objective_upper
        rep.equilibrium_slack = er.slack + equilibrium.normalization_error
    return rep
