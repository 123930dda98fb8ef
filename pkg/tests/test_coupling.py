import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldshift.coupling import (SupportError, block_counts, build_psi, compat_defect, psi_certificate,
                              psi_details)
from ldshift.measures import Bernoulli, HiddenRenewal, Markov, Uniform
from ldshift.observables import ObservableSpec
from ldshift.renewal import preset

MK = Markov([[0.9, 0.1], [0.5, 0.5]])
CYCLE = Markov([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def lp(m, w):
    return m.log_prob(tuple(w)) if w else 0.0


def glue_oracle(ms, n, N, tau, t, w):
    """Plain-loop gluing: best insert per junction, ties to the lexicographically smallest."""
    blocks = [tuple(w[k * n:(k + 1) * n]) for k in range(N)]
    s = blocks[-1]
    for head in reversed(blocks[:-1]):
        cands = [xi for k in range(tau + 1) for xi in itertools.product(range(ms[0].A), repeat=k)]

        def score(xi):
            if len(ms) == 1:
                return lp(ms[0], head + xi + s)
            devs = []
            for m in ms:
                d = lp(m, head + xi + s) - lp(m, head) - lp(m, s)
                devs.append(math.inf if math.isnan(d) else abs(d))
            return -max(devs)

        xi = min(cands, key=lambda x: (-score(x), x))
        s = head + xi + s
    d = t - len(s)
    bs = list(itertools.product(range(ms[0].A), repeat=d))
    b = min(bs, key=lambda b: (-min(lp(m, b + s) - lp(m, s) for m in ms), b))
    return b + s


def test_block_counts_examples():
    lay = block_counts(3, 100, 2)
    assert (lay.N, lay.t_prime) == (20, 60)
    lay = block_counts(2, 5, 0)
    assert (lay.N, lay.t_prime, lay.delta_min) == (2, 4, 1)
    assert block_counts(3, 3, 0).degenerate
    with pytest.raises(ValueError):
        block_counts(4, 3, 0)


def test_bernoulli_gluing_example():
    m = Bernoulli((0.6, 0.4))
    out = build_psi(m, block_counts(2, 5, 0), m.alphabet.parse("abab"))
    assert str(out) == "aabab"


def test_zero_mass_block_is_rejected():
    with pytest.raises(SupportError):
        build_psi(CYCLE, block_counts(2, 5, 0), (0, 2, 0, 1))


@pytest.mark.parametrize("ms,n,t,tau", [
    ([MK], 2, 7, 1), ([CYCLE], 2, 7, 1), ([HiddenRenewal(preset(1).gamma)], 2, 6, 1),
    ([MK, Markov([[0.6, 0.4], [0.3, 0.7]])], 2, 6, 1),
])
def test_psi_matches_oracle(ms, n, t, tau):
    lay = block_counts(n, t, tau)
    for w in itertools.product(range(ms[0].A), repeat=lay.t_prime):
        blocks_ok = all(lp(m, w[k * n:(k + 1) * n]) > -math.inf for m in ms for k in range(lay.N))
        if not blocks_ok:
            continue
        assert psi_details(ms, lay, w).word == glue_oracle(ms, n, lay.N, tau, t, w)


def test_uniform_certificate():
    d = psi_certificate(Uniform(2), block_counts(2, 5, 0))
    assert d.g_min == pytest.approx(math.log(2), abs=1e-12)
    assert d.multiplicity == 1


@pytest.mark.parametrize("m,n,t,tau", [(MK, 2, 8, 1), (CYCLE, 2, 8, 1),
                                       (HiddenRenewal(preset(1).gamma), 2, 8, 1)])
def test_g_min_below_analytic_bound(m, n, t, tau):
    d = psi_certificate(m, block_counts(n, t, tau))
    assert d.g_min <= d.g_analytic + 1e-12
    assert d.multiplicity <= (tau + 1) ** (d.N - 1)


def test_g_min_matches_pushforward_oracle():
    lay = block_counts(2, 7, 1)
    pushed = {}
    for w in itertools.product(range(2), repeat=lay.t_prime):
        mass = math.prod(math.exp(lp(MK, w[k * 2:(k + 1) * 2])) for k in range(lay.N))
        y = glue_oracle([MK], 2, lay.N, 1, 7, w)
        pushed[y] = pushed.get(y, 0.0) + mass
    ref = max(math.log(v) - lp(MK, y) for y, v in pushed.items())
    assert psi_certificate(MK, lay).g_min == pytest.approx(ref, abs=1e-12)


def test_sigma_defect_against_oracle():
    P, Ph = Uniform(2), Bernoulli((0.75, 0.25))
    lay = block_counts(2, 5, 0)
    worst = 0.0
    for w in itertools.product(range(2), repeat=lay.t_prime):
        y = glue_oracle([P, Ph], 2, lay.N, 0, 5, w)
        whole = lp(P, y) - lp(Ph, y)
        parts = sum(lp(P, w[k:k + 2]) - lp(Ph, w[k:k + 2]) for k in (0, 2))
        worst = max(worst, abs(whole - parts) / 5)
    got = compat_defect([P, Ph], lay, "sigma")
    assert got == pytest.approx(worst, abs=1e-12)
    assert got == pytest.approx(0.08109302162163289, abs=1e-12)


def test_birkhoff_defect_constant_observable():
    c, r, n, t = 1.5, 2, 3, 11
    f = ObservableSpec.constant(2, c, r)
    lay = block_counts(n, t, 1)
    res = compat_defect(Uniform(2), lay, "birkhoff", f=f)
    expected = abs(c) * abs((t - r + 1) - lay.N * (n - r + 1)) / t
    assert res["defect"] == pytest.approx(expected, abs=1e-12)
    assert res["ok"]


def test_birkhoff_defect_vanishes_without_gaps():
    lay = block_counts(2, 4, 0)
    f = ObservableSpec.indicator(2, 0)
    assert compat_defect(Bernoulli((0.3, 0.7)), lay, "birkhoff", f=f)["defect"] == 0.0


def test_degenerate_certificate():
    d = psi_certificate(Uniform(2), block_counts(3, 3, 0))
    assert d.N == 0 and math.isnan(d.g_min)


@settings(max_examples=25)
@given(st.integers(1, 3), st.integers(0, 1), st.integers(0, 3), st.data())
def test_psi_length_and_support(n, tau, extra, data):
    t = 2 * (n + tau) + extra
    lay = block_counts(n, t, tau)
    w = data.draw(st.lists(st.integers(0, 1), min_size=lay.t_prime, max_size=lay.t_prime))
    out = psi_details(MK, lay, w)
    assert len(out.word) == t
    assert lp(MK, out.word) > -math.inf
    assert all(len(x) <= tau for x in out.inserts)
    assert out.word[out.delta:out.delta + n] == tuple(w[:n])
