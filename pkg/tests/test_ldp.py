import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar
from scipy.stats import binom

from ldshift.curves import PressureCurve
from ldshift.errors import AbsoluteContinuityError
from ldshift.ldp import (chernoff_curve, chernoff_exponent, empirical_ldp_probe, entropy_pressure,
                         entropy_pressure_curve, finite_pressure, fluctuation_identities, legendre_transform,
                         pressure_curve, probe_csv, reference_rate, sigma_distribution, wilson_interval)
from ldshift.measures import Bernoulli, HiddenRenewal, Markov, MatrixProduct, ThetaLift, Uniform
from ldshift.observables import ObservableSpec
from ldshift.renewal import preset
from ldshift.words import Involution

MK3 = Markov([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.1, 0.2, 0.7]])
MK2 = Markov([[0.9, 0.1], [0.5, 0.5]])
REV3 = Involution.reversal(3, [0, 1, 2])


def pressure_oracle(m, f, alpha, t):
    tot = 0.0
    for w in itertools.product(range(m.A), repeat=t):
        p = math.exp(m.log_prob(w))
        s = sum(f.table[sum(w[i + j] * m.A ** (f.r - 1 - j) for j in range(f.r))][0]
                for i in range(t - f.r + 1))
        tot += p * math.exp(alpha * s)
    return math.log(tot) / t


@pytest.mark.parametrize("m", [MK2, MK3, Bernoulli((0.2, 0.3, 0.5)), Uniform(3)])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_transfer_matches_enumeration(m, r, rng):
    f = ObservableSpec(m.A, r, rng.normal(size=m.A**r))
    for t in (r, 5, 7):
        for a in (-2.0, -0.3, 0.0, 0.7, 3.0):
            q1 = finite_pressure(m, f, a, t, "transfer")
            q2 = finite_pressure(m, f, a, t, "enumerate")
            assert q1 == pytest.approx(q2, abs=1e-12)


@pytest.mark.parametrize("m", [MK2, MatrixProduct([[[0.3, 0.2], [0.1, 0.4]], [[0.2, 0.1], [0.5, 0.3]]]),
                               HiddenRenewal(preset(1).gamma)])
def test_pressure_matches_oracle(m):
    f = ObservableSpec(2, 2, np.array([0.3, -1.0, 0.5, 2.0]))
    for a in (-1.0, 0.4, 1.5):
        assert finite_pressure(m, f, a, 6) == pytest.approx(pressure_oracle(m, f, a, 6), abs=1e-12)


def test_pressure_closed_forms():
    f = ObservableSpec.indicator(2, 0)
    for t in (1, 4, 9):
        assert finite_pressure(Uniform(2), f, 1.0, t) == pytest.approx(math.log((math.e + 1) / 2), abs=1e-13)
        assert finite_pressure(MK3, ObservableSpec.indicator(3, 1), 0.0, t) == pytest.approx(0.0, abs=1e-14)
    c = ObservableSpec.constant(3, 0.7, 2)
    assert finite_pressure(MK3, c, 2.0, 8) == pytest.approx(2.0 * 0.7 * 7 / 8, abs=1e-13)
    curve = pressure_curve(MK3, ObservableSpec.indicator(3, 0), np.linspace(-2, 2, 21), 8)
    assert curve.convexity_defect() <= 1e-12


def test_vector_observable():
    f = ObservableSpec(2, 1, np.array([[1.0, 0.0], [0.0, 1.0]]))
    g = ObservableSpec.indicator(2, 0)
    # alpha = (a, 0) reduces to the scalar indicator
    assert finite_pressure(MK2, f, [0.8, 0.0], 6) == pytest.approx(finite_pressure(MK2, g, 0.8, 6), abs=1e-13)


def test_entropy_pressure_examples():
    P, Ph = Uniform(2), Bernoulli((0.75, 0.25))
    for t in (1, 3, 6):
        assert entropy_pressure(P, Ph, 1.0, t) == pytest.approx(math.log(4 / 3), abs=1e-12)
        assert entropy_pressure(P, Ph, 0.0, t) == 0.0
        assert entropy_pressure(P, Ph, -1.0, t) <= 1e-15
    with pytest.raises(AbsoluteContinuityError) as e:
        entropy_pressure(Uniform(2), Bernoulli((1.0, 0.0)), 0.5, 2)
    assert e.value.word is not None


def test_entropy_pressure_overflow_is_recorded():
    P, Ph = Uniform(2), Bernoulli((0.9, 0.1))
    curve = entropy_pressure_curve(P, Ph, [0.0, 1.0, 1e308], 2)
    assert curve.meta["overflow"] == [1e308]
    assert np.isfinite(curve.values[:2]).all()


def test_legendre_quadratic():
    a = np.linspace(-4, 4, 81)
    rate = legendre_transform(PressureCurve(a, a**2 / 2, t=1), s_grid=np.linspace(-2, 2, 41))
    i = int(np.argmin(np.abs(rate.s - 1.0)))
    assert rate.I[i] == pytest.approx(0.5, abs=1e-10)
    assert np.allclose(rate.I, rate.s**2 / 2, atol=1e-10)


def test_legendre_linear_with_cap():
    a = np.linspace(-5, 5, 101)
    rate = legendre_transform(PressureCurve(a, 0.3 * a, t=1), s_grid=[0.3, 0.8], cap=1.0)
    assert rate.I[0] == pytest.approx(0.0, abs=1e-12)
    assert rate.I[1] == math.inf


def test_legendre_ignores_infinite_pressure():
    a = np.linspace(-2, 2, 41)
    q = np.where(a > 1.5, math.inf, a**2 / 2)
    rate = legendre_transform(PressureCurve(a, q, t=1), s_grid=[0.5])
    assert rate.I[0] == pytest.approx(0.125, abs=1e-10)
    with pytest.raises(ValueError):
        legendre_transform(PressureCurve([0.0, 1.0], [0.0, 1.0], t=1))


def test_rate_of_finite_pressure_vanishes_at_mean():
    f = ObservableSpec.indicator(3, 0)
    curve = pressure_curve(MK3, f, np.arange(-10, 10.001, 0.1), 8)
    rate = legendre_transform(curve, q_fn=lambda x: finite_pressure(MK3, f, x, 8))
    assert rate.I.min() <= 1e-6
    assert rate.convexity_defect() <= 1e-9
    assert np.all(rate.I >= -1e-12)


def test_fluctuation_identities_reversal():
    fd = fluctuation_identities(MK3, REV3, np.linspace(-1, 2, 13), 6)
    assert fd.gc_defect <= 1e-12 and fd.transient_defect <= 1e-10


def test_sigma_distribution_against_oracle():
    Ph = ThetaLift(MK3, REV3)
    t = 4
    atoms = {}
    for w in itertools.product(range(3), repeat=t):
        s = MK3.log_prob(w) - Ph.log_prob(w)
        key = round(s, 9)
        atoms[key] = atoms.get(key, 0.0) + math.exp(MK3.log_prob(w))
    vals, lm = sigma_distribution(MK3, Ph, t)
    assert len(vals) == len(atoms)
    for v, m in zip(vals, lm):
        assert math.exp(m) == pytest.approx(atoms[round(v, 9)], rel=1e-10)


def test_chernoff_symmetric_pair():
    curve = chernoff_curve(MK3, ThetaLift(MK3, REV3), 6)
    res = chernoff_exponent(curve)
    assert res.symmetric and res.minimizer == 0.5


def test_chernoff_equal_measures():
    res = chernoff_exponent(chernoff_curve(MK2, MK2, 5))
    assert abs(res.exponent) <= 1e-12


def test_chernoff_iid_closed_form():
    p, ph = np.array([0.7, 0.3]), np.array([0.4, 0.6])
    e = lambda a: math.log(np.sum(p ** (1 - a) * ph**a))  # noqa: E731
    ref = minimize_scalar(e, bounds=(0, 1), method="bounded", options={"xatol": 1e-12})
    P, Ph = Bernoulli(tuple(p)), Bernoulli(tuple(ph))
    res = chernoff_exponent(chernoff_curve(P, Ph, 4), e_fn=lambda a: entropy_pressure(P, Ph, -a, 4))
    assert not res.symmetric
    assert res.exponent == pytest.approx(ref.fun, abs=1e-10)
    assert res.minimizer == pytest.approx(ref.x, abs=1e-5)


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert (lo, hi) == pytest.approx((0.40383, 0.59617), abs=1e-5)
    assert wilson_interval(0, 100)[0] == 0.0


def test_probe_against_binomial():
    p, t, n = 0.3, 20, 200_000
    m, f = Bernoulli((p, 1 - p)), ObservableSpec.indicator(2, 0)
    rows = empirical_ldp_probe(m, f, (0.5, 1.0), [t], n, seed=7, rate=lambda s: 0.0)
    exact = binom.sf(9, t, p)
    sd = math.sqrt(exact * (1 - exact) / n)
    assert abs(rows[0].hits / n - exact) <= 5 * sd
    assert rows[0].ci_low <= math.log(exact) / t <= rows[0].ci_high
    assert rows[0].ref_rate == 0.0


def test_probe_zero_hits():
    m, f = Bernoulli((0.99, 0.01)), ObservableSpec.indicator(2, 1)
    rows = empirical_ldp_probe(m, f, (1.0, 1.0), [20], 1000, seed=1, rate=lambda s: 1.0)
    assert rows[0].hits == 0 and rows[0].emp_rate == -math.inf


def test_probe_is_thread_invariant(tmp_path):
    m, f = MK2, ObservableSpec.indicator(2, 1)
    out = []
    for k, th in enumerate((1, 4)):
        rows = empirical_ldp_probe(m, f, (0.3, 1.0), [5, 10], 150_000, seed=3, rate=lambda s: s, threads=th)
        path = tmp_path / f"p{k}.csv"
        probe_csv(rows, path)
        out.append(path.read_bytes())
    assert out[0] == out[1]


def test_reference_rate_callable():
    assert reference_rate(lambda s: (s - 0.2) ** 2, (0.5, 1.0)) == pytest.approx(-0.09, abs=1e-9)


@st.composite
def chains(draw):
    A = draw(st.integers(2, 3))
    rows = [draw(st.lists(st.floats(0.05, 1.0), min_size=A, max_size=A)) for _ in range(A)]
    P = np.array(rows)
    return Markov(P / P.sum(axis=1, keepdims=True))


@settings(max_examples=25)
@given(chains(), st.sampled_from([6, 10]), st.floats(-3, 3), st.floats(-3, 3))
def test_pressure_convex_and_lipschitz(m, t, a, b):
    f = ObservableSpec.indicator(m.A, 0)
    qa, qb = finite_pressure(m, f, a, t), finite_pressure(m, f, b, t)
    qm = finite_pressure(m, f, (a + b) / 2, t)
    assert qm <= (qa + qb) / 2 + 1e-12
    assert abs(qa - qb) <= abs(a - b) * f.norm + 1e-12
