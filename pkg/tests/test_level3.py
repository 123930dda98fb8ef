import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldshift.errors import AbsoluteContinuityError
from ldshift.level3 import (block_entropy, entropy_rates, entropy_sweep, ks_subadditivity_check, level3_csv,
                            level3_fr_check, mean_entropy_production, mixture_affinity_check)
from ldshift.measures import Bernoulli, HiddenRenewal, Markov, ThetaLift, Uniform
from ldshift.renewal import preset
from ldshift.words import Involution

MK3 = Markov([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.1, 0.2, 0.7]])
MK3B = Markov([[0.4, 0.4, 0.2], [0.3, 0.3, 0.4], [0.5, 0.25, 0.25]])
REV3 = Involution.reversal(3, [0, 1, 2])


def words(A, t):
    return itertools.product(range(A), repeat=t)


def ent_oracle(Q, P, t):
    tot = 0.0
    for w in words(Q.A, t):
        q = math.exp(Q.log_prob(w))
        if q > 0:
            tot += q * (Q.log_prob(w) - P.log_prob(w))
    return tot / t


def test_iid_relative_entropy():
    for t in (1, 3, 7):
        r = entropy_rates(Uniform(2), Bernoulli((0.75, 0.25)), t)
        assert r.ent_rate == pytest.approx(0.5 * math.log(2 / 3) + 0.5 * math.log(2), abs=1e-12)
        assert r.h_t_over_t == pytest.approx(math.log(2), abs=1e-12)
        assert r.sigma_t_over_t - r.h_t_over_t == pytest.approx(r.ent_rate, abs=1e-12)


@pytest.mark.parametrize("Q,P", [(MK3, MK3B), (MK3B, Uniform(3)), (Bernoulli((0.1, 0.6, 0.3)), MK3)])
def test_entropy_rates_match_oracle(Q, P):
    for t in (1, 2, 5):
        assert entropy_rates(Q, P, t).ent_rate == pytest.approx(ent_oracle(Q, P, t), abs=1e-12)


def test_block_entropy_oracle():
    m = HiddenRenewal(preset(2).gamma)
    ref = -sum(math.exp(m.log_prob(w)) * m.log_prob(w) for w in words(2, 6) if m.log_prob(w) > -math.inf)
    assert block_entropy(m, 6) == pytest.approx(ref, abs=1e-12)


def test_infinite_relative_entropy_has_witness():
    r = entropy_rates(Uniform(2), Bernoulli((1.0, 0.0)), 3)
    assert r.ent_rate == math.inf and str(r.witness) == "aab"


def test_level3_identity_reversal():
    for Q in (MK3B, Bernoulli((0.2, 0.2, 0.6))):
        for t in (2, 5):
            chk = level3_fr_check(Q, MK3, REV3, t)
            assert chk.infinite is None
            assert chk.defect <= 1e-12 and chk.entropy_defect <= 1e-12


def test_level3_identity_letterwise():
    theta = Involution.letterwise([1, 0, 2])
    chk = level3_fr_check(MK3B, MK3, theta, 4)
    assert chk.defect <= 1e-12


def test_mean_entropy_production_matches_oracle():
    Ph = ThetaLift(MK3, REV3)
    t = 4
    ref = sum(math.exp(MK3B.log_prob(w)) * (MK3.log_prob(w) - Ph.log_prob(w)) for w in words(3, t)) / t
    assert mean_entropy_production(MK3B, MK3, Ph, t) == pytest.approx(ref, abs=1e-12)
    with pytest.raises(AbsoluteContinuityError):
        mean_entropy_production(Uniform(2), Bernoulli((1.0, 0.0)), Uniform(2), 2)


def test_subadditivity():
    rep = ks_subadditivity_check(MK3, 6)
    assert rep.max_excess <= 1e-12
    rep = ks_subadditivity_check(Bernoulli((0.3, 0.7)), 5)
    assert abs(rep.max_excess) <= 1e-12


def test_mixture_affinity():
    rep = mixture_affinity_check([MK3, MK3B, Uniform(3)], [0.2, 0.5, 0.3], 4)
    assert rep.ok and rep.lower < rep.mixed < rep.upper


def test_csv(tmp_path):
    path = tmp_path / "l3.csv"
    level3_csv(entropy_sweep(MK3B, MK3, [1, 2]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,h_rate,varsigma_rate,ent_rate"
    assert lines[1].startswith("1,")


@settings(max_examples=20)
@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3), st.integers(1, 5))
def test_relative_entropy_nonnegative(p, t):
    Q = Bernoulli(tuple(np.array(p) / sum(p)))
    assert entropy_rates(Q, MK3, t).ent_rate >= -1e-12
    assert entropy_rates(Q, Q, t).ent_rate == pytest.approx(0.0, abs=1e-12)
