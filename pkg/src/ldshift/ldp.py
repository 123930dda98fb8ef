"""Finite-t pressures, numerical Legendre transforms, fluctuation identities,
the Chernoff exponent and a Monte Carlo probe of large-deviation rates.

All sums over Omega_t are exact enumerations in the log domain.  Markov and
i.i.d. measures additionally have a transfer-matrix path whose cost is
linear in ``t``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp
from scipy.stats import norm

from ._parallel import pmap
from .curves import PressureCurve, RateFunction, write_csv
from .errors import AbsoluteContinuityError
from .measures import Bernoulli, Markov, Measure, ThetaLift
from .observables import ObservableSpec
from .words import DEFAULT_BUDGET, Involution, Word, word_array

log = logging.getLogger(__name__)


def _alpha_vec(alpha, d: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.shape != (d,):
        raise ValueError(f"alpha must have dimension {d}")
    return a


# finite-t pressure -------------------------------------------------------


def _transfer_capable(m: Measure) -> bool:
    return isinstance(m, (Markov, Bernoulli))


def _transfer_log_sum(m: Measure, f: ObservableSpec, alpha: np.ndarray, t: int) -> float:
    """``log sum_w P(w) e^{alpha . S f(w)}`` by iterating a tilted transfer matrix.

    The state is the last ``k = max(r-1, 1)`` symbols; each step appends one
    symbol and picks up the window of ``f`` that ends there.
    """
    A, r = m.A, f.r
    k = max(r - 1, 1)
    if t <= k:
        return _enum_log_sum(m, f, alpha, t)
    states = word_array(A, k)
    fa = f.table @ alpha
    init = m.log_marginals_of(states)
    if k >= r:
        init = init + fa[f.window_index(states)].sum(axis=1)
    if isinstance(m, Markov):
        step = m._logP
    else:
        step = np.tile(m._logp, (A, 1))
    S = A**k
    # successor of state x under letter a
    nxt = (np.arange(S)[:, None] * A + np.arange(A)[None, :]) % S
    ext = np.concatenate([np.repeat(states, A, axis=0), np.tile(np.arange(A), S)[:, None]], axis=1)
    win = fa[f.window_index(ext[:, -r:])[:, 0]].reshape(S, A)
    logT = np.full((S, S), -np.inf)
    logT[np.arange(S)[:, None], nxt] = step[states[:, -1]] + win
    shift = np.max(logT[np.isfinite(logT)])
    T = np.exp(logT - shift)
    lv0 = np.max(init[np.isfinite(init)])
    v = np.exp(init - lv0)
    acc = lv0
    for _ in range(t - k):
        v = v @ T
        s = v.sum()
        if s == 0.0:
            return -math.inf
        v /= s
        acc += math.log(s) + shift
    return acc


def _enum_log_sum(m: Measure, f: ObservableSpec, alpha: np.ndarray, t: int,
                  budget: int | None = DEFAULT_BUDGET) -> float:
    words = word_array(m.A, t, budget)
    lp = m.log_marginals_of(words)
    return float(logsumexp(lp + f.birkhoff(words) @ alpha))


def finite_pressure(m: Measure, f: ObservableSpec, alpha, t: int, method: str = "auto",
                    budget: int | None = DEFAULT_BUDGET) -> float:
    """``(1/t) log sum_{w in Omega_t} P_t(w) exp(alpha . S_{t-r+1} f(w))``.

    ``method`` is ``"enumerate"``, ``"transfer"`` (Markov and i.i.d. only) or
    ``"auto"``, which takes the transfer path when available.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    if f.A != m.A:
        raise ValueError("observable and measure use different alphabets")
    a = _alpha_vec(alpha, f.d)
    if method == "auto":
        method = "transfer" if _transfer_capable(m) else "enumerate"
    if method == "transfer":
        if not _transfer_capable(m):
            raise ValueError(f"no transfer path for {type(m).__name__}")
        return _transfer_log_sum(m, f, a, t) / t
    if method == "enumerate":
        return _enum_log_sum(m, f, a, t, budget) / t
    raise ValueError(f"unknown method {method!r}")


def pressure_curve(m: Measure, f: ObservableSpec, alphas, t: int, method: str = "auto",
                   threads: int | None = 1, budget: int | None = DEFAULT_BUDGET) -> PressureCurve:
    """Scalar-observable pressure on a grid; one pure evaluation per point."""
    if f.d != 1:
        raise ValueError("pressure curves are scalar; use finite_pressure for d > 1")
    grid = np.asarray(sorted(map(float, alphas)))
    vals = pmap(lambda a: finite_pressure(m, f, a, t, method, budget), grid, threads)
    return PressureCurve(grid, np.array(vals), t=t, meta={"kind": "observable"})


# entropy-production pressure --------------------------------------------


def _sigma_terms(P: Measure, Phat: Measure, t: int, budget):
    if P.A != Phat.A:
        raise ValueError("measures use different alphabets")
    lp = P.log_marginals(t, budget)
    lh = Phat.log_marginals(t, budget)
    sup = np.isfinite(lp)
    bad = np.nonzero(sup & np.isneginf(lh))[0]
    if bad.size:
        w = Word(tuple(word_array(P.A, t)[bad[0]].tolist()), P.alphabet)
        raise AbsoluteContinuityError(f"P({w}) > 0 = Phat({w})", w)
    return lp[sup], lh[sup]


def _ep_value(lp: np.ndarray, lh: np.ndarray, alpha: float, t: int) -> tuple[float, bool]:
    if alpha == 0.0:
        # the summands are P(w) and sum to 1 by normalization
        return 0.0, False
    with np.errstate(over="ignore"):
        val = float(logsumexp((1 + alpha) * lp - alpha * lh))
    return val / t, math.isinf(val) and val > 0


def entropy_pressure(P: Measure, Phat: Measure, alpha: float, t: int,
                     budget: int | None = DEFAULT_BUDGET) -> float:
    """``(1/t) log sum_{w in supp P_t} P(w)^{1+alpha} Phat(w)^{-alpha}``.

    Raises :class:`AbsoluteContinuityError` with the first witness word when
    ``P_t`` is not absolutely continuous with respect to ``Phat_t``.
    """
    lp, lh = _sigma_terms(P, Phat, t, budget)
    val, over = _ep_value(lp, lh, float(alpha), t)
    if over:
        log.warning("entropy pressure overflowed at alpha=%r, t=%d", alpha, t)
    return val


def entropy_pressure_curve(P: Measure, Phat: Measure, alphas, t: int,
                           budget: int | None = DEFAULT_BUDGET) -> PressureCurve:
    """Entropy-production pressure on a grid; overflowed points are listed in ``meta``."""
    grid = np.asarray(sorted(map(float, alphas)))
    lp, lh = _sigma_terms(P, Phat, t, budget)
    out = [_ep_value(lp, lh, a, t) for a in grid]
    vals = np.array([v for v, _ in out])
    over = [float(a) for a, (_, o) in zip(grid, out) if o]
    return PressureCurve(grid, vals, t=t, meta={"kind": "entropy", "overflow": over})


# Legendre transform ------------------------------------------------------


def _local_quadratic(x3, y3):
    c = np.polyfit(np.asarray(x3), np.asarray(y3), 2)
    return lambda a: float(np.polyval(c, a))


def _refine_max(obj, lo, mid, hi) -> float | None:
    """Golden-section maximisation of ``obj`` inside the bracket ``lo < mid < hi``."""
    try:
        res = minimize_scalar(lambda a: -obj(a), bracket=(lo, mid, hi), method="golden")
    except (ValueError, RuntimeError):
        return None
    if not (lo <= res.x <= hi) or not np.isfinite(res.fun):
        return None
    return float(-res.fun)


def legendre_transform(curve: PressureCurve, s_grid=None, q_fn: Callable[[float], float] | None = None,
                       cap: float = math.inf, n_s: int = 201) -> RateFunction:
    """``I(s) = sup_alpha (alpha s - q(alpha))`` over the finite part of the curve.

    The discrete maximum is refined by golden-section search between its
    neighbours, using ``q_fn`` when supplied and a local quadratic through the
    three bracketing samples otherwise.  Points where ``q = +inf`` lie outside
    the effective domain and never contribute.  Values above ``cap`` are
    reported as ``+inf``; ``RateFunction.argmax`` at a grid end means the
    supremum was not resolved by the grid.
    """
    fin = curve.finite
    if fin.sum() < 3:
        raise ValueError("Legendre transform needs at least 3 finite pressure values")
    a, q = curve.alphas[fin], curve.values[fin]
    if s_grid is None:
        slopes = np.diff(q) / np.diff(a)
        s_grid = np.linspace(slopes.min(), slopes.max(), n_s)
    s = np.asarray(s_grid, dtype=float)
    I = np.empty_like(s)
    arg = np.empty_like(s)
    for j, sj in enumerate(s):
        vals = a * sj - q
        i = int(np.argmax(vals))
        best, at = float(vals[i]), float(a[i])
        if 0 < i < len(a) - 1 and vals[i] > vals[i - 1] and vals[i] > vals[i + 1]:
            qf = q_fn if q_fn is not None else _local_quadratic(a[i - 1:i + 2], q[i - 1:i + 2])
            ref = _refine_max(lambda x: x * sj - qf(x), a[i - 1], a[i], a[i + 1])
            if ref is not None and ref > best:
                best = ref
        I[j] = best if best <= cap else math.inf
        arg[j] = at
    return RateFunction(s, I, dual=curve, argmax=arg)


# fluctuation identities --------------------------------------------------


class FluctuationDefects(NamedTuple):
    gc_defect: float
    transient_defect: float


def _cluster(values: np.ndarray, rtol: float = 1e-9):
    """Group sorted values whose gaps are below ``rtol * max(1, |v|)``."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    groups, start = [], 0
    for i in range(1, len(sv) + 1):
        if i == len(sv) or sv[i] - sv[i - 1] > rtol * max(1.0, abs(sv[i])):
            groups.append(order[start:i])
            start = i
    return groups


def sigma_distribution(P: Measure, Phat: Measure, t: int, budget: int | None = DEFAULT_BUDGET):
    """Atoms of ``sigma_t`` under ``P``: arrays ``(values, log_masses)`` sorted by value."""
    lp, lh = _sigma_terms(P, Phat, t, budget)
    sig = lp - lh
    groups = _cluster(sig)
    vals = np.array([sig[g].mean() for g in groups])
    masses = np.array([logsumexp(lp[g]) for g in groups])
    return vals, masses


def fluctuation_identities(P: Measure, theta: Involution, alpha_grid, t: int,
                           budget: int | None = DEFAULT_BUDGET) -> FluctuationDefects:
    """Defects of the finite-t symmetry ``<e^{-a sigma}> = <e^{(a-1) sigma}>`` and of
    ``P(sigma_t = s) = e^{s} P(sigma_t = -s)`` for ``Phat = Theta P``."""
    Phat = ThetaLift(P, theta)
    lp, lh = _sigma_terms(P, Phat, t, budget)
    sig = lp - lh
    gc = 0.0
    for a in np.atleast_1d(np.asarray(alpha_grid, dtype=float)):
        l1 = logsumexp(lp - a * sig)
        l2 = logsumexp(lp + (a - 1) * sig)
        gc = max(gc, abs(math.expm1(l2 - l1)))
    vals, masses = sigma_distribution(P, Phat, t, budget)
    tr = 0.0
    for v, m in zip(vals, masses):
        j = int(np.argmin(np.abs(vals + v)))
        if abs(vals[j] + v) > 1e-9 * max(1.0, abs(v)):
            return FluctuationDefects(gc, math.inf)
        tr = max(tr, abs(m - v - masses[j]))
    return FluctuationDefects(float(gc), float(tr))


# Chernoff exponent -------------------------------------------------------


@dataclass
class ChernoffResult:
    exponent: float
    minimizer: float
    symmetric: bool


def chernoff_curve(P: Measure, Phat: Measure, t: int, n: int = 101,
                   budget: int | None = DEFAULT_BUDGET) -> PressureCurve:
    """``e(alpha) = q(-alpha)`` on an ``n``-point grid of [0, 1]."""
    grid = np.linspace(0.0, 1.0, n)
    lp, lh = _sigma_terms(P, Phat, t, budget)
    vals = np.array([_ep_value(lp, lh, -a, t)[0] for a in grid])
    return PressureCurve(grid, vals, t=t, meta={"kind": "chernoff"})


def chernoff_exponent(curve: PressureCurve, e_fn: Callable[[float], float] | None = None,
                      sym_tol: float = 1e-9) -> ChernoffResult:
    """``min_{alpha in [0,1]} e(alpha)`` by grid search plus golden-section refinement.

    A curve with ``e(alpha) = e(1 - alpha)`` within ``sym_tol`` reports its
    minimiser at exactly 1/2.
    """
    a, e = curve.alphas, curve.values
    inside = (a >= 0) & (a <= 1)
    if inside.sum() < 3:
        raise ValueError("Chernoff curve needs at least 3 points in [0, 1]")
    a, e = a[inside], e[inside]
    if not np.all(np.isfinite(e)):
        bad = float(a[~np.isfinite(e)][0])
        raise ValueError(f"non-finite e(alpha) at alpha={bad}")
    mirror = np.interp(1 - a, a, e)
    symmetric = bool(np.max(np.abs(mirror - e)) <= sym_tol)
    if symmetric:
        half = e_fn(0.5) if e_fn is not None else float(np.interp(0.5, a, e))
        return ChernoffResult(float(half), 0.5, True)
    i = int(np.argmin(e))
    best, at = float(e[i]), float(a[i])
    if 0 < i < len(a) - 1 and e[i] < e[i - 1] and e[i] < e[i + 1]:
        ef = e_fn if e_fn is not None else _local_quadratic(a[i - 1:i + 2], e[i - 1:i + 2])
        try:
            res = minimize_scalar(ef, bracket=(a[i - 1], a[i], a[i + 1]), method="golden")
            if a[i - 1] <= res.x <= a[i + 1] and res.fun < best:
                best, at = float(res.fun), float(res.x)
        except (ValueError, RuntimeError):
            pass
    return ChernoffResult(best, at, False)


# Monte Carlo probe -------------------------------------------------------


@dataclass
class ProbeRow:
    t: int
    emp_rate: float
    ref_rate: float
    ci_low: float
    ci_high: float
    hits: int
    samples: int

    def csv_row(self):
        return (self.t, self.emp_rate, self.ref_rate, self.ci_low, self.ci_high)


PROBE_HEADER = ["t", "emp_rate", "ref_rate", "ci_low", "ci_high"]
CHUNK = 1 << 16


def wilson_interval(hits: int, n: int, level: float = 0.95) -> tuple[float, float]:
    z = float(norm.ppf(0.5 + level / 2))
    p = hits / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if hits == 0 else max(0.0, mid - half)
    hi = 1.0 if hits == n else min(1.0, mid + half)
    return lo, hi


def _log_or_ninf(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def reference_rate(rate, interval) -> float:
    """``-inf_{s in [a, b]} I(s)`` from a callable or a sampled :class:`RateFunction`."""
    a, b = interval
    if isinstance(rate, RateFunction):
        sel = (rate.s >= a - 1e-12) & (rate.s <= b + 1e-12)
        if not sel.any():
            raise ValueError("rate function grid does not meet the interval")
        return -float(np.min(rate.I[sel]))
    grid = np.linspace(a, b, 2001)
    vals = np.array([rate(x) for x in grid])
    i = int(np.argmin(vals))
    best = float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(rate, bounds=(lo, hi), method="bounded")
        best = min(best, float(res.fun))
    return -best


def _default_rate(m: Measure, f: ObservableSpec, t: int, interval) -> RateFunction:
    curve = pressure_curve(m, f, np.arange(-30.0, 30.0 + 1e-9, 0.05), t)
    s = np.linspace(interval[0], interval[1], 201)
    return legendre_transform(curve, s, q_fn=lambda x: finite_pressure(m, f, x, t))


def empirical_ldp_probe(m: Measure, f: ObservableSpec, interval, t_list, n_samples: int, seed: int,
                        rate=None, threads: int | None = 1, level: float = 0.95) -> list[ProbeRow]:
    """Empirical ``(1/t) log P(S_t f / t in [a, b])`` against ``-inf_{[a, b]} I``.

    Samples are drawn in fixed chunks of ``2**16`` paths, chunk ``k`` seeded
    by ``(seed, t, k)``, so the result is independent of the thread count.
    ``rate`` is a callable ``I(s)`` or a :class:`RateFunction`; when omitted
    it is the Legendre transform of the finite-t pressure at each ``t``.
    """
    if f.d != 1:
        raise ValueError("the probe needs a scalar observable")
    a, b = map(float, interval)
    if a > b:
        raise ValueError("empty interval")
    rows = []
    for t in t_list:
        t = int(t)
        sizes = [min(CHUNK, n_samples - k) for k in range(0, n_samples, CHUNK)]

        def work(k, t=t):
            rng = np.random.default_rng([seed, t, k])
            paths = m.sample(t, sizes[k], rng)
            x = f.birkhoff(paths)[:, 0] / t
            return int(np.count_nonzero((x >= a - 1e-12) & (x <= b + 1e-12)))

        hits = sum(pmap(work, range(len(sizes)), threads))
        lo, hi = wilson_interval(hits, n_samples, level)
        ref = reference_rate(rate if rate is not None else _default_rate(m, f, t, (a, b)), (a, b))
        rows.append(ProbeRow(t, _log_or_ninf(hits / n_samples) / t, ref,
                             _log_or_ninf(lo) / t, _log_or_ninf(hi) / t, hits, n_samples))
    if rows and all(r.hits == 0 for r in rows):
        log.warning("probe recorded zero hits at every t")
    return rows


# CSV ---------------------------------------------------------------------


def pressure_csv(curve: PressureCurve, path) -> None:
    write_csv(path, ["alpha", "q"], curve.rows())


def rate_csv(rate: RateFunction, path) -> None:
    write_csv(path, ["s", "I"], rate.rows())


def probe_csv(rows: list[ProbeRow], path) -> None:
    write_csv(path, PROBE_HEADER, [r.csv_row() for r in rows])
