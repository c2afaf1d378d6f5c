import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thermoweight.symbolic import FactorChain, FactorMap, Sft, ValidationError, validate_chain

settings.register_profile("pkg", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


def brute_language(X: Sft, n: int) -> list:
    """All legal words of length n by filtering the full product, lexicographic."""
    return [w for w in itertools.product(range(X.size), repeat=n) if X.is_legal(w)]


def random_essential_sft(rng: np.random.Generator, k: int, density: float = 0.6) -> Sft:
    """Random primitive SFT: a random 0/1 matrix plus a Hamiltonian cycle and a self-loop."""
    a = (rng.random((k, k)) < density).astype(int)
    for i in range(k):
        a[i, (i + 1) % k] = 1
    a[0, 0] = 1
    return Sft(a)


@pytest.fixture
def golden():
    return Sft.golden_mean()


def projected_sft(X: Sft, symbol_map) -> Sft:
    sm = np.asarray(symbol_map)
    m = int(sm.max()) + 1
    t = np.zeros((m, m), dtype=int)
    for u, v in np.argwhere(X.matrix):
        t[sm[u], sm[v]] = 1
    return Sft(t)


def random_chain(rng: np.random.Generator, sizes=(3, 2), weights=None, max_tries: int = 50):
    """Random tower of one-block maps whose image levels are projected SFTs and pass validation."""
    for _ in range(max_tries):
        X = random_essential_sft(rng, sizes[0])
        levels, maps = [X], []
        ok = True
        for m in sizes[1:]:
            src = levels[-1]
            if m > src.size:
                ok = False
                break
            sm = np.concatenate([np.arange(m), rng.integers(0, m, src.size - m)])
            rng.shuffle(sm)
            Y = projected_sft(src, sm)
            if Y.size != m:
                ok = False
                break
            maps.append(FactorMap(src, Y, sm))
            levels.append(Y)
        if not ok:
            continue
        w = weights if weights is not None else [float(rng.uniform(0.3, 1.5))] + [
            float(rng.uniform(0.0, 1.5)) for _ in sizes[1:]
        ]
        chain = FactorChain(levels, maps, w)
        try:
            validate_chain(chain, 4)
        except ValidationError:
            continue
        return chain
    raise RuntimeError("no valid random chain found")


def product_chain(fiber_sizes, weights):
    """Full shift over all (b, i) with i < N_b mapped onto the full shift over b."""
    sm = np.repeat(np.arange(len(fiber_sizes)), fiber_sizes)
    X, Y = Sft.full(len(sm)), Sft.full(len(fiber_sizes))
    return FactorChain([X, Y], [FactorMap(X, Y, sm)], weights)


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
