import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldshift.decoupling import (DecouplingSpec, extend_word, replay_defect, ssd_from_sld_ud, verify_sld,
                                verify_ssd, verify_ud)
from ldshift.errors import AbsoluteContinuityError, BudgetExceeded
from ldshift.gamma import GammaSpec
from ldshift.measures import Bernoulli, HiddenRenewal, Markov, MatrixProduct, Uniform
from ldshift.renewal import preset

CYCLE = Markov([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
MK = Markov([[0.9, 0.1], [0.5, 0.5]])
MP = MatrixProduct([[[0.3, 0.2], [0.1, 0.4]], [[0.2, 0.1], [0.5, 0.3]]])
HR1 = HiddenRenewal(preset(1).gamma)
HRH1 = HiddenRenewal(preset(1).gamma_hat)


def lp(m, w):
    return m.log_prob(tuple(w)) if w else 0.0


def pairs(A, t, v_max):
    for u in itertools.product(range(A), repeat=t):
        for L in range(1, v_max + 1):
            for v in itertools.product(range(A), repeat=L):
                yield u, v


def inserts(A, tau):
    for k in range(tau + 1):
        yield from itertools.product(range(A), repeat=k)


def sld_oracle(m, t, tau, v_max):
    worst = -math.inf
    for u, v in pairs(m.A, t, v_max):
        base = lp(m, u) + lp(m, v)
        if base == -math.inf:
            continue
        best = min(base - lp(m, u + xi + v) for xi in inserts(m.A, tau))
        worst = max(worst, best)
    return worst


def ud_oracle(m, t, tau, v_max):
    worst = -math.inf
    for u, v in pairs(m.A, t, v_max):
        base = lp(m, u) + lp(m, v)
        for xi in itertools.product(range(m.A), repeat=tau):
            whole = lp(m, u + xi + v)
            if whole == -math.inf:
                continue
            worst = max(worst, math.inf if base == -math.inf else whole - base)
    return worst


def ssd_oracle(m, mh, t, tau, v_max):
    worst = -math.inf
    for u, v in pairs(m.A, t, v_max):
        if lp(m, u) + lp(m, v) == -math.inf:
            continue
        best = math.inf
        for xi in inserts(m.A, tau):
            dev = max(abs(lp(x, u + xi + v) - lp(x, u) - lp(x, v)) for x in (m, mh))
            best = min(best, dev if not math.isnan(dev) else math.inf)
        worst = max(worst, best)
    return worst


@pytest.mark.parametrize("m", [MK, CYCLE, MP, HR1, Bernoulli((0.2, 0.8))])
@pytest.mark.parametrize("t,tau,v_max", [(1, 0, 2), (2, 1, 2), (3, 1, 1)])
def test_sld_matches_oracle(m, t, tau, v_max):
    rep = verify_sld(m, t, DecouplingSpec("SLD", tau, v_max))
    ref = sld_oracle(m, t, tau, v_max)
    assert rep.c_star == ref or rep.c_star == pytest.approx(ref, abs=1e-12)
    assert replay_defect(rep, m) <= 1e-12


@pytest.mark.parametrize("m", [MK, CYCLE, MP, Uniform(3)])
@pytest.mark.parametrize("t,tau,v_max", [(1, 0, 2), (2, 1, 2), (2, 2, 1)])
def test_ud_matches_oracle(m, t, tau, v_max):
    rep = verify_ud(m, t, DecouplingSpec("UD", tau, v_max))
    assert rep.c_star == pytest.approx(ud_oracle(m, t, tau, v_max), abs=1e-12)
    assert replay_defect(rep, m) <= 1e-12


@pytest.mark.parametrize("m,mh", [(MK, Markov([[0.6, 0.4], [0.3, 0.7]])), (HR1, HRH1),
                                  (Bernoulli((0.3, 0.7)), Uniform(2))])
@pytest.mark.parametrize("t,tau,v_max", [(1, 1, 2), (2, 1, 2)])
def test_ssd_matches_oracle(m, mh, t, tau, v_max):
    rep = verify_ssd(m, mh, t, DecouplingSpec("SSD", tau, v_max))
    assert rep.c_star == pytest.approx(ssd_oracle(m, mh, t, tau, v_max), abs=1e-12)
    assert replay_defect(rep, m, mh) <= 1e-12


def test_bernoulli_sld_is_exact():
    for t in range(1, 5):
        rep = verify_sld(Bernoulli((0.3, 0.7)), t, DecouplingSpec("SLD", 0, 3))
        assert abs(rep.c_star) <= 1e-12


def test_cycle_chain_needs_an_insert():
    assert verify_sld(CYCLE, 3, DecouplingSpec("SLD", 0, 3)).c_star == math.inf
    rep = verify_sld(CYCLE, 3, DecouplingSpec("SLD", 1, 3))
    assert math.isfinite(rep.c_star) and not rep.violations
    assert rep.c_star == pytest.approx(math.log(4 / 3), abs=1e-12)


def test_renewal_sld_with_insert_a():
    for t in range(1, 6):
        spec = DecouplingSpec("SLD", 1, 4)
        assert math.isfinite(verify_sld(HR1, t, spec).c_star)
        forced = verify_sld(HR1, t, spec, witness="a")
        assert math.isfinite(forced.c_star)
        assert all(str(x) == "a" for x in forced.witnesses.values())


def test_ud_examples():
    for t in range(1, 6):
        assert abs(verify_ud(Uniform(2), t, DecouplingSpec("UD", 0, 2)).c_star) <= 1e-12
    expected = max(math.log(MK.P[a, b] / MK.pi[b]) for a in range(2) for b in range(2) if MK.P[a, b] > 0)
    for t in range(1, 5):
        assert verify_ud(MK, t, DecouplingSpec("UD", 0, 3)).c_star == pytest.approx(expected, abs=1e-12)
        assert math.isfinite(verify_ud(MP, t, DecouplingSpec("UD", 0, 3)).c_star)


def test_ssd_examples():
    rep = verify_ssd(Bernoulli((0.3, 0.7)), Bernoulli((0.3, 0.7)), 3, DecouplingSpec("SSD", 0, 2))
    assert abs(rep.c_star) <= 1e-12 and all(len(x) == 0 for x in rep.witnesses.values())
    for t in range(1, 5):
        rep = verify_ssd(HR1, HRH1, t, DecouplingSpec("SSD", 1, 4), witness="a")
        assert math.isfinite(rep.c_star)
    with pytest.raises(AbsoluteContinuityError):
        verify_ssd(Markov([[0.5, 0.5], [0.5, 0.5]]), Markov([[1.0, 0.0], [0.5, 0.5]]), 2,
                   DecouplingSpec("SSD", 0, 1))


def test_window_mode_matches_summed_oracle():
    t, tau, v_max, k = 2, 2, 2, 1
    rep = verify_sld(CYCLE, t, DecouplingSpec("SLD", tau, v_max), window=k)
    worst = -math.inf
    for u, v in pairs(3, t, v_max):
        base = lp(CYCLE, u) + lp(CYCLE, v)
        if base == -math.inf:
            continue
        tot = sum(math.exp(lp(CYCLE, u + xi + v)) for n in range(tau - k, tau + 1)
                  for xi in itertools.product(range(3), repeat=n))
        worst = max(worst, base - math.log(tot) if tot > 0 else math.inf)
    assert rep.c_star == pytest.approx(worst, abs=1e-12)


def test_budget_guard():
    with pytest.raises(BudgetExceeded):
        verify_sld(Uniform(2), 10, DecouplingSpec("SLD", 2, 10), budget=2**10)


def test_extend_word_examples():
    b, r = extend_word(Uniform(2), Uniform(2).alphabet.parse("ab"), 1)
    assert r == pytest.approx(-math.log(2), abs=1e-15)
    b, r = extend_word(MK, "ab", 0)
    assert len(b) == 0 and r == 0.0
    m = Bernoulli((0.9, 0.1))
    b, r = extend_word(m, "a", 1)
    assert str(b) == "a" and r == pytest.approx(math.log(0.9), abs=1e-15)
    for k in range(1, 4):
        _, r = extend_word(MK, "ba", k)
        assert r >= -k * math.log(2) - 1e-12


def test_ssd_from_sld_ud():
    b = Bernoulli((0.3, 0.7))
    rep = ssd_from_sld_ud(b, b, 3, DecouplingSpec("SSD", 0, 2))
    assert abs(rep.c_star) <= 1e-12 and all(len(x) == 0 for x in rep.witnesses.values())
    rep = ssd_from_sld_ud(HR1, HRH1, 3, DecouplingSpec("SSD", 1, 2))
    assert math.isfinite(rep.c_star) and rep.c_star <= rep.bound + 1e-12
    assert all(len(x) <= 2 for x in rep.witnesses.values() if x is not None)


@given(st.floats(0.05, 0.95), st.integers(1, 3))
def test_bernoulli_constants_vanish(p, t):
    m = Bernoulli((p, 1 - p))
    assert abs(verify_sld(m, t, DecouplingSpec("SLD", 0, 2)).c_star) <= 1e-12
    assert abs(verify_ud(m, t, DecouplingSpec("UD", 0, 2)).c_star) <= 1e-12
