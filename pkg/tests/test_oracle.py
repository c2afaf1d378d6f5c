import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import product_chain
from thermoweight.equilibrium import CylinderTable
from thermoweight.oracle import (
    MarkovMeasure,
    NonStationaryError,
    brute_force_cesaro,
    closed_form_full_shift,
    closed_form_three_level,
    cylinder_table,
    markov_entropy,
    parry_measure,
    symbol_weights,
    variational_sweep,
)
from thermoweight.potentials import ConstantPotential
from thermoweight.pressure import top_constants, weighted_pressure
from thermoweight.symbolic import FactorChain, FactorMap, Sft

LOG_GOLDEN = math.log((1 + math.sqrt(5)) / 2)


class TestMarkov:
    def test_uniform_bernoulli(self):
        assert markov_entropy(MarkovMeasure.bernoulli(Sft.full(2), [0.5, 0.5])) == pytest.approx(math.log(2))

    def test_golden_half(self, golden):
        mu = MarkovMeasure(golden, 1, [[0.5, 0.5], [1.0, 0.0]])
        assert mu.initial == pytest.approx([2 / 3, 1 / 3])
        assert markov_entropy(mu) == pytest.approx(2 / 3 * math.log(2), abs=1e-12)

    def test_point_mass(self):
        assert markov_entropy(MarkovMeasure.bernoulli(Sft.full(2), [1.0, 0.0])) == 0.0

    def test_non_stationary_initial(self, golden):
        with pytest.raises(NonStationaryError):
            MarkovMeasure(golden, 1, [[0.5, 0.5], [1.0, 0.0]], initial=[0.5, 0.5])

    def test_ambiguous_stationary_law(self):
        with pytest.raises(NonStationaryError):
            MarkovMeasure(Sft.full(2), 1, np.eye(2))

    def test_forbidden_transition(self, golden):
        with pytest.raises(ValueError):
            MarkovMeasure(golden, 1, [[0.5, 0.5], [0.5, 0.5]])

    def test_parry_entropy(self, golden):
        assert markov_entropy(parry_measure(golden)) == pytest.approx(LOG_GOLDEN, abs=1e-12)

    @given(st.integers(0, 2**32 - 1), st.integers(0, 2))
    def test_block_entropy_limit(self, seed, order):
        rng = np.random.default_rng(seed)
        X = Sft.full(3) if order == 0 else Sft([[1, 1, 0], [0, 1, 1], [1, 1, 1]])
        mu = MarkovMeasure.random(X, order, rng)
        h = markov_entropy(mu)
        tab = cylinder_table(mu, 5)
        for d in range(max(order, 1) + 1, 6):
            assert abs(tab.block_entropy(d) - tab.block_entropy(d - 1) - h) <= 1e-10

    @given(st.integers(0, 2**32 - 1))
    def test_tables_normalized_and_consistent(self, seed):
        mu = MarkovMeasure.random(Sft.golden_mean(), 2, np.random.default_rng(seed))
        t4 = cylinder_table(mu, 4)
        assert t4.total == pytest.approx(1.0)
        assert t4.marginal(3).masses == pytest.approx(cylinder_table(mu, 3).masses, abs=1e-14)
        assert t4.stationarity_defect() <= 1e-12


class TestClosedForm:
    def test_product_example(self):
        val, w = closed_form_full_shift([2, 1], [1, 1])
        assert val == pytest.approx(2 * math.log(math.sqrt(2) + 1), abs=1e-12)
        assert symbol_weights([2, 1], [1, 1]) == pytest.approx([0.29289, 0.29289, 0.41421], abs=1e-5)
        assert (w * [2, 1]).sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("a", [(1, 1), (0.5, 2.0), (2.0, 0.0)])
    def test_trivial_fibers(self, a):
        val, w = closed_form_full_shift([1, 1], a)
        assert val == pytest.approx(sum(a) * math.log(2))
        assert w == pytest.approx([0.5, 0.5])

    def test_plain_entropy(self):
        assert closed_form_full_shift([2, 1], [1, 0])[0] == pytest.approx(math.log(3))

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            closed_form_full_shift([2, 1], [0, 1])

    @pytest.mark.parametrize("N,a", [((2, 1), (1, 1)), ((3, 1, 2), (0.7, 1.3)), ((2, 2), (1.5, 0.4)), ((4, 1), (1.0, 0.0))])
    def test_brute_force_partition_sums(self, N, a):
        # (A/n) log sum_J (#fiber of J) ** (a1/A), summed by explicit enumeration
        A = sum(a)
        val, _ = closed_form_full_shift(N, a)
        sm = np.repeat(np.arange(len(N)), N)
        for n in range(1, 7):
            counts = {}
            for w in itertools.product(range(len(sm)), repeat=n):
                key = tuple(sm[list(w)])
                counts[key] = counts.get(key, 0) + 1
            total = sum(c ** (a[0] / A) for c in counts.values())
            assert A * math.log(total) / n == pytest.approx(val, rel=1e-12)

    @pytest.mark.parametrize("N,a", [((2, 1), (1, 1)), ((3, 1, 2), (0.7, 1.3)), ((1, 3), (2.0, 0.5))])
    def test_reproduced_by_bracket(self, N, a):
        chain = product_chain(list(N), a)
        val, _ = closed_form_full_shift(N, a)
        widths = []
        for n in (4, 8):
            br = weighted_pressure(chain, ConstantPotential(chain.levels[0]), n).bracket
            assert br.contains(val, 1e-12)
            widths.append(br.width)
        assert widths[1] <= widths[0] / 2 + 1e-12

    def test_three_level_degenerates(self):
        # a3 = 0 and a one-point top reduces to the two-level form
        val = closed_form_three_level([0, 0, 1], [0, 0], (1.0, 1.0, 0.0))
        assert val == pytest.approx(closed_form_full_shift([2, 1], [1, 1])[0])


class TestBruteCesaro:
    def test_two_words(self):
        out = brute_force_cesaro({(0, 1, 0): 0.5, (1, 1, 1): 0.5}, 3, 2)
        assert out == pytest.approx({(0, 1): 0.25, (1, 0): 0.25, (1, 1): 0.5})


class TestSweep:
    def test_full_shift_bernoulli(self):
        X = Sft.full(2)
        chain = FactorChain.single(X)
        phi = ConstantPotential(X)
        wp = weighted_pressure(chain, phi, 12)
        rng = np.random.default_rng(7)
        cands = [MarkovMeasure.random(X, 0, rng) for _ in range(50)]
        rep = variational_sweep(chain, phi, cands, 3, wp.bracket, wp.constants, CylinderTable.uniform(X, 3), seed=7)
        assert rep.dominated and rep.passed
        assert rep.max_objective <= math.log(2) + 1e-12
        assert rep.equilibrium_objective == pytest.approx(math.log(2))
        assert rep.as_dict()["seed"] == 7

    def test_product_perturbation(self):
        chain = product_chain([2, 1], [1, 1])
        X = chain.levels[0]
        phi = ConstantPotential(X)
        wp = weighted_pressure(chain, phi, 12)
        opt = symbol_weights([2, 1], [1, 1])
        base = variational_sweep(chain, phi, [MarkovMeasure.bernoulli(X, opt)], 2, wp.bracket, wp.constants)
        assert base.max_objective == pytest.approx(2 * math.log(math.sqrt(2) + 1), abs=1e-12)
        for i, j in itertools.permutations(range(3), 2):
            for eps in (0.05, -0.05):
                q = opt.copy()
                q[i] += eps
                q[j] -= eps
                rep = variational_sweep(chain, phi, [MarkovMeasure.bernoulli(X, q)], 2, wp.bracket, wp.constants)
                assert rep.dominated
                assert rep.max_objective < base.max_objective - 1e-6

    def test_golden_grid(self, golden):
        chain = FactorChain.single(golden)
        phi = ConstantPotential(golden)
        wp = weighted_pressure(chain, phi, 16)
        grid = np.linspace(0.05, 0.95, 91)
        cands = [MarkovMeasure(golden, 1, [[q, 1 - q], [1.0, 0.0]]) for q in grid]
        rep = variational_sweep(chain, phi, cands, 2, wp.bracket, wp.constants)
        assert rep.dominated
        assert rep.max_objective == pytest.approx(LOG_GOLDEN, abs=1e-3)
        best = grid[int(np.argmax(rep.objectives))]
        parry_q = parry_measure(golden).kernel[0, 0]
        assert abs(best - parry_q) <= 0.01

    def test_three_level_constants_certified(self):
        X, Y, Z = Sft.full(4), Sft.full(2), Sft.full(1)
        chain = FactorChain([X, Y, Z], [FactorMap(X, Y, [0, 0, 0, 1]), FactorMap(Y, Z, [0, 0])], [1.0, 0.5, 0.5])
        assert top_constants(chain, ConstantPotential(X)).certified
