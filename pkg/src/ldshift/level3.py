"""Finite-t Level-3 quantities: block entropies, cross entropies, relative
entropy rates, mean entropy production and the Level-3 fluctuation identity.

Conventions: ``h_t(Q) = -sum Q log Q`` with ``0 log 0 = 0`` and
``varsigma_t(Q) = -sum Q log P``, so ``Ent(Q_t | P_t) = varsigma_t - h_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import write_csv
from .errors import AbsoluteContinuityError
from .measures import Measure, Mixture, ThetaLift
from .words import DEFAULT_BUDGET, Involution, Word, word_array


def _witness(m: Measure, t: int, idx: int) -> Word:
    return Word(tuple(word_array(m.A, t)[idx].tolist()), m.alphabet)


def _weighted(q: np.ndarray, lx: np.ndarray) -> float:
    """``sum_{q > 0} q * lx``; ``-inf`` in ``lx`` on the support propagates."""
    sup = q > 0
    return float(np.sum(q[sup] * lx[sup]))


def block_entropy(Q: Measure, t: int, budget: int | None = DEFAULT_BUDGET) -> float:
    lq = Q.log_marginals(t, budget)
    return -_weighted(np.exp(lq), lq)


@dataclass
class EntropyReport:
    t: int
    h_t_over_t: float
    sigma_t_over_t: float
    ent_rate: float
    witness: Word | None = None

    def csv_row(self):
        return (self.t, self.h_t_over_t, self.sigma_t_over_t, self.ent_rate)


LEVEL3_HEADER = ["t", "h_rate", "varsigma_rate", "ent_rate"]


def entropy_rates(Q: Measure, P: Measure, t: int, budget: int | None = DEFAULT_BUDGET) -> EntropyReport:
    """Exact ``h_t/t``, ``varsigma_t/t`` and ``Ent(Q_t|P_t)/t``.

    When some word has ``Q > 0 = P`` the cross entropy and the relative
    entropy are ``+inf`` and the first such word is kept as ``witness``.
    """
    if Q.A != P.A:
        raise ValueError("measures use different alphabets")
    if t < 1:
        raise ValueError("t must be at least 1")
    lq = Q.log_marginals(t, budget)
    lp = P.log_marginals(t, budget)
    q = np.exp(lq)
    h = -_weighted(q, lq)
    bad = np.nonzero((q > 0) & np.isneginf(lp))[0]
    if bad.size:
        return EntropyReport(t, h / t, math.inf, math.inf, _witness(Q, t, int(bad[0])))
    sup = q > 0
    vs = -_weighted(q, lp)
    # summing the log-ratio directly avoids cancelling two large entropies
    ent = float(np.sum(q[sup] * (lq[sup] - lp[sup])))
    return EntropyReport(t, h / t, vs / t, ent / t)


def entropy_sweep(Q: Measure, P: Measure, ts, budget: int | None = DEFAULT_BUDGET) -> list[EntropyReport]:
    return [entropy_rates(Q, P, int(t), budget) for t in ts]


def level3_csv(reports: list[EntropyReport], path) -> None:
    write_csv(path, LEVEL3_HEADER, [r.csv_row() for r in reports])


def mean_entropy_production(Q: Measure, P: Measure, Phat: Measure, t: int,
                            budget: int | None = DEFAULT_BUDGET) -> float:
    """``(1/t) sum_w Q(w) (log P(w) - log Phat(w))`` over the support of ``Q_t``."""
    lq = Q.log_marginals(t, budget)
    lp = P.log_marginals(t, budget)
    lh = Phat.log_marginals(t, budget)
    sup = np.isfinite(lq)
    bad = np.nonzero(sup & ~(np.isfinite(lp) & np.isfinite(lh)))[0]
    if bad.size:
        w = _witness(Q, t, int(bad[0]))
        raise AbsoluteContinuityError(f"P or Phat vanishes at {w} where Q({w}) > 0", w)
    return float(np.sum(np.exp(lq[sup]) * (lp[sup] - lh[sup]))) / t


@dataclass
class Level3Check:
    t: int
    lhs: float
    rhs: float
    defect: float
    entropy_defect: float
    infinite: str | None = None


def level3_fr_check(Q: Measure, P: Measure, theta: Involution, t: int,
                    budget: int | None = DEFAULT_BUDGET) -> Level3Check:
    """Compare ``(1/t)<sigma_t, Q>`` with ``(1/t)(Ent((Theta Q)_t|P_t) - Ent(Q_t|P_t))``.

    ``sigma_t = log P - log Theta P``.  The two sides agree exactly at every
    finite ``t`` because ``theta_t`` is a bijection of Omega_t.  Also reports
    ``|h_t(Q) - h_t(Theta Q)| / t``.  When an entropy is infinite the defect is
    ``nan`` and ``infinite`` names the side.
    """
    Phat = ThetaLift(P, theta)
    TQ = ThetaLift(Q, theta)
    r_q = entropy_rates(Q, P, t, budget)
    r_tq = entropy_rates(TQ, P, t, budget)
    ent_def = abs(r_q.h_t_over_t - r_tq.h_t_over_t)
    if math.isinf(r_q.ent_rate) or math.isinf(r_tq.ent_rate):
        side = "Q" if math.isinf(r_q.ent_rate) else "Theta Q"
        return Level3Check(t, math.nan, math.nan, math.nan, ent_def, side)
    lhs = mean_entropy_production(Q, P, Phat, t, budget)
    rhs = r_tq.ent_rate - r_q.ent_rate
    return Level3Check(t, lhs, rhs, abs(lhs - rhs), ent_def)


@dataclass
class SubadditivityReport:
    t_max: int
    max_excess: float
    worst: tuple[int, int]


def ks_subadditivity_check(Q: Measure, t_max: int, budget: int | None = DEFAULT_BUDGET) -> SubadditivityReport:
    """``max_{t + t' <= t_max} h_{t+t'} - h_t - h_{t'}`` (non-positive for stationary ``Q``)."""
    h = [0.0] + [block_entropy(Q, t, budget) for t in range(1, t_max + 1)]
    best, worst = -math.inf, (0, 0)
    for t in range(1, t_max):
        for s in range(1, t_max - t + 1):
            e = h[t + s] - h[t] - h[s]
            if e > best:
                best, worst = e, (t, s)
    return SubadditivityReport(t_max, float(best), worst)


@dataclass
class AffinityReport:
    t: int
    mixed: float
    lower: float
    upper: float

    @property
    def ok(self) -> bool:
        tol = 1e-12 * max(1.0, abs(self.upper))
        return self.lower - tol <= self.mixed <= self.upper + tol


def mixture_affinity_check(components, weights, t: int, budget: int | None = DEFAULT_BUDGET) -> AffinityReport:
    """``sum p_i h_t(Q_i) <= h_t(sum p_i Q_i) <= sum p_i h_t(Q_i) - sum p_i log p_i``."""
    w = np.asarray(weights, dtype=float)
    mix = Mixture(tuple(components), tuple(w.tolist()))
    hs = np.array([block_entropy(c, t, budget) for c in components])
    lower = float(w @ hs)
    nz = w > 0
    upper = lower - float(np.sum(w[nz] * np.log(w[nz])))
    return AffinityReport(t, block_entropy(mix, t, budget), lower, upper)
