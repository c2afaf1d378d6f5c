import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermoweight.equilibrium import entropy_and_objective
from thermoweight.oracle import closed_form_full_shift
from thermoweight.potentials import ConstantPotential
from thermoweight.pressure import NoSpecificationError
from thermoweight.sponge import (
    SpongeSpec,
    build_sponge_chain,
    fiber_counts,
    kenyon_peres_weights,
    mcmullen_oracle,
    mcmullen_via_weights,
    sponge_dimension,
)
from thermoweight.symbolic import ValidationError

CARPET = SpongeSpec((2, 3), [(0, 0), (0, 1), (1, 2)])
THETA = math.log(2) / math.log(3)


def golden_cube():
    D = list(itertools.product(range(2), repeat=3))
    T = [[0 if u[0] == 1 and v[0] == 1 else 1 for v in D] for u in D]
    return SpongeSpec((2, 2, 2), D, sft=T)


def carpet(t0, t1, m=(2, 3)):
    return SpongeSpec(m, [(0, j) for j in range(t0)] + [(1, j) for j in range(t1)])


class TestWeights:
    def test_two_three(self):
        assert kenyon_peres_weights((2, 3)) == pytest.approx([0.91024, 0.53246], abs=1e-5)

    def test_equal_bases(self):
        assert kenyon_peres_weights((2, 2)) == pytest.approx([1 / math.log(2), 0.0])

    def test_three_bases(self):
        expected = [1 / math.log(5), 1 / math.log(3) - 1 / math.log(5), 1 / math.log(2) - 1 / math.log(3)]
        assert kenyon_peres_weights((2, 3, 5)) == pytest.approx(expected)

    def test_decreasing_bases_rejected(self):
        with pytest.raises(ValidationError):
            kenyon_peres_weights((3, 2))


class TestSpec:
    def test_bad_digit(self):
        with pytest.raises(ValidationError):
            SpongeSpec((2, 3), [(0, 3)])

    def test_unsorted_bases(self):
        spec, perm = SpongeSpec.sorted_from((3, 2), [(0, 0), (1, 0), (2, 1)])
        assert spec.bases == (2, 3) and perm == [1, 0]
        assert spec.digits == ((0, 0), (0, 1), (1, 2))


class TestChain:
    def test_full_digits(self):
        sc = build_sponge_chain(SpongeSpec((2, 3), list(itertools.product(range(2), range(3)))))
        X, Y = sc.chain.levels
        assert X.is_full and X.size == 6 and Y.is_full and Y.size == 2

    def test_carpet_fibers(self):
        sc = build_sponge_chain(CARPET)
        assert sc.chain.levels[0].is_full and sc.chain.levels[1].size == 2
        assert list(sc.chain.maps[0].symbol_map) == [0, 0, 1]
        assert list(fiber_counts(CARPET)) == [2, 1]

    def test_golden_cube(self):
        sc = build_sponge_chain(golden_cube())
        assert sc.chain.k == 3
        assert [lv.size for lv in sc.chain.levels] == [8, 4, 2]
        assert not sc.chain.levels[-1].is_full
        assert sc.level_digits[-1] == ((0,), (1,))


class TestMcMullen:
    def test_carpet(self):
        assert mcmullen_oracle(CARPET) == pytest.approx(math.log2(2**THETA + 1), abs=1e-12)
        assert mcmullen_oracle(CARPET) == pytest.approx(1.34968, abs=1e-5)

    def test_two_two_fibers(self):
        assert mcmullen_oracle(carpet(2, 2)) == pytest.approx(1 + THETA, abs=1e-12)

    @pytest.mark.parametrize("t", [(1, 1), (2, 1), (2, 2)])
    def test_equal_bases(self, t):
        assert mcmullen_oracle(carpet(*t, m=(2, 2))) == pytest.approx(math.log2(sum(t)))

    @pytest.mark.parametrize("t", [(2, 1), (3, 1), (2, 3), (1, 1)])
    def test_matches_weighted_closed_form(self, t):
        assert mcmullen_via_weights(carpet(*t, m=(2, 4))) == pytest.approx(mcmullen_oracle(carpet(*t, m=(2, 4))), rel=1e-12)

    def test_brute_force_sums(self):
        # weighted partition sums of the zero potential, enumerated directly
        a = kenyon_peres_weights(CARPET.bases)
        A = a.sum()
        for n in range(1, 7):
            counts = {}
            for w in itertools.product(range(3), repeat=n):
                key = tuple(CARPET.digits[s][0] for s in w)
                counts[key] = counts.get(key, 0) + 1
            val = A * math.log(sum(c ** (a[0] / A) for c in counts.values())) / n
            assert val == pytest.approx(mcmullen_oracle(CARPET), rel=1e-12)

    def test_wrong_shape(self):
        with pytest.raises(ValidationError):
            mcmullen_oracle(SpongeSpec((2, 2, 2), [(0, 0, 0)]))


class TestDimension:
    def test_full_torus(self):
        spec = SpongeSpec((2, 3), list(itertools.product(range(2), range(3))))
        for n in (1, 5, 9):
            br = sponge_dimension(spec, n, d=None).bracket
            assert br.lower == pytest.approx(2.0, abs=1e-12) and br.upper == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 6, 12])
    def test_carpet_contains_oracle(self, n):
        br = sponge_dimension(CARPET, n, d=1).bracket
        assert br.contains(mcmullen_oracle(CARPET), 1e-12)

    def test_self_similar(self):
        br = sponge_dimension(SpongeSpec((2, 2), [(0, 0), (0, 1), (1, 0)]), 8, d=None).bracket
        assert br.contains(math.log(3) / math.log(2), 1e-12)

    def test_measure_symbol_masses(self):
        res = sponge_dimension(CARPET, 12, d=1)
        _, w = closed_form_full_shift([2, 1], kenyon_peres_weights((2, 3)))
        assert res.measure.masses == pytest.approx([w[0], w[0], w[1]], abs=1e-12)

    def test_three_level_full_shift(self):
        spec = SpongeSpec((2, 3, 4), [(0, 0, 0), (0, 0, 3), (0, 1, 1), (1, 2, 0), (1, 2, 1), (1, 2, 2)])
        a = kenyon_peres_weights(spec.bases)
        A2 = a[0] + a[1]
        # inner fibers over the first two coordinates, then the outer fold
        inner = {}
        for dg in spec.digits:
            inner.setdefault(dg[0], {}).setdefault(dg[:2], 0)
            inner[dg[0]][dg[:2]] += 1
        M = [math.exp(closed_form_full_shift(list(v.values()), a[:2])[0] / A2) for _, v in sorted(inner.items())]
        val = closed_form_full_shift(M, (A2, a[2]))[0]
        br = sponge_dimension(spec, 8, d=None).bracket
        assert br.contains(val, 1e-10)

    def test_golden_cube(self):
        spec = golden_cube()
        exact = 2 + math.log2((1 + math.sqrt(5)) / 2)
        widths = []
        for n in (6, 12):
            br = sponge_dimension(spec, n, d=None).bracket
            assert br.contains(exact)
            widths.append(br.width)
        assert widths[1] <= 0.6 * widths[0]

    def test_no_specification(self):
        with pytest.raises(NoSpecificationError):
            sponge_dimension(SpongeSpec((2, 2), [(0, 0), (1, 1)], sft=[[1, 1], [0, 1]]), 6)

    @given(st.integers(0, 2**32 - 1))
    def test_monotone_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        bases = tuple(sorted(int(b) for b in rng.integers(2, 4, size=2)))
        everything = list(itertools.product(range(bases[0]), range(bases[1])))
        order = rng.permutation(len(everything))
        k = int(rng.integers(1, len(everything)))
        small = [everything[i] for i in order[:k]]
        big = [everything[i] for i in order[: k + int(rng.integers(1, len(everything) - k + 1))]]
        lo_small = sponge_dimension(SpongeSpec(bases, small), 3, d=None).bracket
        lo_big = sponge_dimension(SpongeSpec(bases, big), 3, d=None).bracket
        assert lo_big.lower >= lo_small.lower - 1e-12
        for br in (lo_small, lo_big):
            assert -1e-12 <= br.lower <= br.upper <= 2 + 1e-12

    def test_objective_approaches_bracket(self):
        spec = golden_cube()
        objs = []
        for d in (1, 2, 3, 4):
            res = sponge_dimension(spec, 8, d=d)
            chain = res.sponge.chain
            rep = entropy_and_objective(chain, res.measure, ConstantPotential(chain.levels[0]), res.pressure.constants)
            assert rep.objective_upper >= res.bracket.lower - rep.slack - res.measure.normalization_error
            objs.append(rep.objective_upper)
        exact = 2 + math.log2((1 + math.sqrt(5)) / 2)
        errs = [abs(o - exact) for o in objs]
        assert max(errs[1:]) < errs[0]
        assert min(errs) <= 0.01
