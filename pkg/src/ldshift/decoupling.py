"""Finite-horizon certificates for the decoupling hypotheses.

All verifiers enumerate ``u`` in Omega_t, ``v`` of every length ``1..v_max`` and
inserts ``xi``; the marginal of ``u xi v`` for all triples at once is one
reshaped call to ``log_marginals`` because lexicographic order of
Omega_{t+k+L} is exactly the product order of ``(u, xi, v)``.

Conventions: ``log 0 = -inf``; pairs with ``P(u)P(v) = 0`` are vacuous;
among equally good inserts the lexicographically smallest index sequence wins.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import AbsoluteContinuityError, BudgetExceeded, CheckFailure, LDShiftError
from .measures import Measure
from .words import DEFAULT_BUDGET, Word, word_array

SLD, UD, SSD = "SLD", "UD", "SSD"


@dataclass(frozen=True)
class DecouplingSpec:
    kind: str
    tau: int | dict | Callable = 0
    v_max: int = 1

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in (SLD, UD, SSD):
            raise ValueError(f"kind must be SLD, UD or SSD, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.v_max < 1:
            raise ValueError("v_max must be at least 1")
        if isinstance(self.tau, int) and self.tau < 0:
            raise ValueError("tau must be non-negative")

    def tau_at(self, t: int) -> int:
        tau = self.tau
        if callable(tau):
            val = tau(t)
        elif isinstance(tau, dict):
            val = tau[t]
        else:
            val = tau
        val = int(val)
        if val < 0:
            raise ValueError("tau must be non-negative")
        return val


@dataclass
class DecouplingReport:
    kind: str
    t: int
    tau: int
    v_max: int
    c_star: float
    witnesses: dict = field(default_factory=dict)
    pair_values: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    elapsed_ms: float = 0.0
    window: int | None = None
    bound: float | None = None  # a priori constant when the inserts were composed from other certificates

    @property
    def finite(self) -> bool:
        return math.isfinite(self.c_star)

    def to_dict(self) -> dict:
        c = self.c_star
        return {
            "kind": self.kind,
            "t": self.t,
            "tau": self.tau,
            "v_max": self.v_max,
            "c_star": c if math.isfinite(c) else ("inf" if c > 0 else "-inf"),
            "witness_count": sum(1 for x in self.witnesses.values() if x is not None),
            "violations": [[str(u), str(v)] for u, v in self.violations],
            "elapsed_ms": self.elapsed_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_budget(A: int, length: int, budget):
    if budget is not None and A**length > budget:
        raise BudgetExceeded(f"A^{length} words exceeds budget {budget}")


def _inserts(A: int, tau: int, exact: bool = False):
    """Candidate insert lengths with their words, in a fixed order."""
    lengths = [tau] if exact else range(tau + 1)
    for k in lengths:
        yield k, word_array(A, k)


def _lex_merge(best_val, best_xi, val, xi_rows, k, better):
    """Update running optimum; exact ties go to the lexicographically smaller insert."""
    upd = better(val, best_val)
    tie = (val == best_val) & np.isfinite(val)
    for i in np.nonzero(tie & ~upd)[0]:
        cand = tuple(xi_rows[i]) if k else ()
        if best_xi[i] is None or cand < best_xi[i]:
            upd[i] = True
    for i in np.nonzero(upd)[0]:
        best_xi[i] = tuple(xi_rows[i]) if k else ()
    best_val = np.where(upd, val, best_val)
    return best_val, best_xi


def _pair_grid(m: Measure, t: int, L: int, k: int, budget) -> np.ndarray:
    """``log P(u xi v)`` as an array indexed ``[u, xi, v]``."""
    A = m.A
    _check_budget(A, t + k + L, budget)
    return m.log_marginals(t + k + L, budget).reshape(A**t, A**k, A**L)


def _symbols(w, alphabet) -> tuple[int, ...]:
    """Symbols of a Word, a string over ``alphabet`` or an integer sequence."""
    if isinstance(w, Word):
        return tuple(w.symbols)
    if isinstance(w, str):
        return tuple(alphabet.parse(w).symbols)
    return tuple(int(s) for s in w)


def _forced(witness, m):
    if witness is None:
        return None
    A = m.A
    syms = _symbols(witness, m.alphabet)
    if any(not 0 <= s < A for s in syms):
        raise ValueError("forced witness uses symbols outside the alphabet")
    return syms


def _finish(report, m, t, per_L):
    """Collect per-(u, v) optima into the report."""
    c_star = -math.inf
    words_t = word_array(m.A, t)
    for L, (vals, xis, active) in per_L.items():
        words_L = word_array(m.A, L)
        for ui, vi in zip(*np.nonzero(active)):
            val = float(vals[ui, vi])
            u = Word(tuple(words_t[ui].tolist()), m.alphabet)
            v = Word(tuple(words_L[vi].tolist()), m.alphabet)
            xi = xis[ui][vi] if xis is not None else None
            report.pair_values[(u, v)] = val
            report.witnesses[(u, v)] = None if xi is None else Word(xi, m.alphabet)
            if val == math.inf:
                report.violations.append((u, v))
            c_star = max(c_star, val)
    report.c_star = c_star
    return report


def verify_sld(m: Measure, t: int, spec: DecouplingSpec, window: int | None = None,
               witness=None, budget: int | None = DEFAULT_BUDGET) -> DecouplingReport:
    """Smallest ``c`` with ``P(u xi v) >= e^{-c} P(u) P(v)`` for some ``|xi| <= tau``.

    With ``window=k`` the summed condition over ``tau-k <= |xi| <= tau`` is
    tested instead (no individual witnesses).  ``witness`` forces one insert
    for every pair.
    """
    t0 = time.perf_counter()
    tau = spec.tau_at(t)
    A = m.A
    _check_budget(A, t + tau + spec.v_max, budget)
    forced = _forced(witness, m)
    lu = m.log_marginals(t, budget)
    per_L = {}
    for L in range(1, spec.v_max + 1):
        lv = m.log_marginals(L, budget)
        base = lu[:, None] + lv[None, :]
        active = np.isfinite(base)
        if window is not None:
            ks = range(max(0, tau - window), tau + 1)
            stack = [logsumexp(_pair_grid(m, t, L, k, budget), axis=1) for k in ks]
            best = logsumexp(np.stack(stack), axis=0)
            with np.errstate(invalid="ignore"):
                diff = base - best
            per_L[L] = (np.where(active, diff, -math.inf), None, active)
            continue
        best = np.full(base.shape, -math.inf)
        best_xi = [[None] * A**L for _ in range(A**t)]
        flat_xi = [None] * (A**t * A**L)
        if forced is not None:
            k = len(forced)
            idx = int(np.dot(forced, A ** np.arange(k - 1, -1, -1))) if k else 0
            best = _pair_grid(m, t, L, k, budget)[:, idx, :]
            flat_xi = [forced] * len(flat_xi)
        else:
            for k, xis in _inserts(A, tau):
                grid = _pair_grid(m, t, L, k, budget)
                arg = grid.argmax(axis=1)
                val = np.take_along_axis(grid, arg[:, None, :], axis=1)[:, 0, :]
                best_flat, flat_xi = _lex_merge(best.ravel(), flat_xi, val.ravel(), xis[arg.ravel()] if k else
                                                np.zeros((arg.size, 0), int), k, np.greater)
                best = best_flat.reshape(best.shape)
        best_xi = [flat_xi[i * A**L:(i + 1) * A**L] for i in range(A**t)]
        with np.errstate(invalid="ignore"):
            vals = np.where(active, base - best, -math.inf)
        per_L[L] = (vals, best_xi, active)
    report = DecouplingReport(SLD, t, tau, spec.v_max, -math.inf, window=window)
    _finish(report, m, t, per_L)
    report.elapsed_ms = 1e3 * (time.perf_counter() - t0)
    return report


def verify_ud(m: Measure, t: int, spec: DecouplingSpec, budget: int | None = DEFAULT_BUDGET) -> DecouplingReport:
    """Smallest ``c`` with ``P(u xi v) <= e^{c} P(u) P(v)`` for every ``|xi| = tau``;
    the stored witness is the worst insert."""
    t0 = time.perf_counter()
    tau = spec.tau_at(t)
    A = m.A
    _check_budget(A, t + tau + spec.v_max, budget)
    lu = m.log_marginals(t, budget)
    xis = word_array(A, tau)
    per_L = {}
    for L in range(1, spec.v_max + 1):
        lv = m.log_marginals(L, budget)
        base = lu[:, None] + lv[None, :]
        grid = _pair_grid(m, t, L, tau, budget)
        arg = grid.argmax(axis=1)
        top = np.take_along_axis(grid, arg[:, None, :], axis=1)[:, 0, :]
        with np.errstate(invalid="ignore"):
            vals = np.where(np.isneginf(top), -math.inf, np.where(np.isneginf(base), math.inf, top - base))
        active = np.isfinite(top)
        wit = [[tuple(xis[arg[i, j]].tolist()) for j in range(A**L)] for i in range(A**t)]
        per_L[L] = (vals, wit, active)
    report = DecouplingReport(UD, t, tau, spec.v_max, -math.inf)
    _finish(report, m, t, per_L)
    report.elapsed_ms = 1e3 * (time.perf_counter() - t0)
    return report


def _ac_guard(lp: np.ndarray, lh: np.ndarray, length: int, m: Measure):
    bad = np.nonzero(np.isfinite(lp) & np.isneginf(lh))
    if bad[0].size:
        flat = np.ravel_multi_index(tuple(b[:1] for b in bad), lp.shape)[0] if lp.ndim > 1 else bad[0][0]
        w = Word(tuple(word_array(m.A, length)[flat].tolist()), m.alphabet)
        raise AbsoluteContinuityError(f"P({w}) > 0 = Phat({w})", w)


def verify_ssd(m: Measure, mhat: Measure, t: int, spec: DecouplingSpec, witness=None,
               budget: int | None = DEFAULT_BUDGET) -> DecouplingReport:
    """Smallest ``c`` such that one shared ``xi`` gives
    ``|log P#(u xi v) - log P#(u) - log P#(v)| <= c`` for both measures."""
    t0 = time.perf_counter()
    if m.A != mhat.A:
        raise ValueError("measures must share an alphabet")
    tau = spec.tau_at(t)
    A = m.A
    _check_budget(A, t + tau + spec.v_max, budget)
    forced = _forced(witness, m)
    lu, lhu = m.log_marginals(t, budget), mhat.log_marginals(t, budget)
    _ac_guard(lu, lhu, t, m)
    per_L = {}
    for L in range(1, spec.v_max + 1):
        lv, lhv = m.log_marginals(L, budget), mhat.log_marginals(L, budget)
        _ac_guard(lv, lhv, L, m)
        base = lu[:, None] + lv[None, :]
        base_h = lhu[:, None] + lhv[None, :]
        active = np.isfinite(base)
        best = np.full(base.shape, math.inf)
        flat_xi = [None] * base.size
        cands = [(len(forced), None)] if forced is not None else list(_inserts(A, tau))
        for k, xis in cands:
            gp = _pair_grid(m, t, L, k, budget)
            gh = _pair_grid(mhat, t, L, k, budget)
            _ac_guard(gp.reshape(-1), gh.reshape(-1), t + k + L, m)
            with np.errstate(invalid="ignore"):
                dev = np.maximum(np.abs(gp - base[:, None, :]), np.abs(gh - base_h[:, None, :]))
            dev = np.where(np.isnan(dev), math.inf, dev)
            if forced is not None:
                idx = int(np.dot(forced, A ** np.arange(k - 1, -1, -1))) if k else 0
                best = dev[:, idx, :]
                flat_xi = [forced] * base.size
                break
            arg = dev.argmin(axis=1)
            val = np.take_along_axis(dev, arg[:, None, :], axis=1)[:, 0, :]
            rows = xis[arg.ravel()] if k else np.zeros((arg.size, 0), int)
            best_flat, flat_xi = _lex_merge(best.ravel(), flat_xi, val.ravel(), rows, k, np.less)
            best = best_flat.reshape(base.shape)
        wit = [flat_xi[i * A**L:(i + 1) * A**L] for i in range(A**t)]
        per_L[L] = (np.where(active, best, -math.inf), wit, active)
    report = DecouplingReport(SSD, t, tau, spec.v_max, -math.inf)
    _finish(report, m, t, per_L)
    report.elapsed_ms = 1e3 * (time.perf_counter() - t0)
    return report


def replay_defect(report: DecouplingReport, m: Measure, mhat: Measure | None = None) -> float:
    """Re-evaluate each stored witness; largest disagreement with the stored optimum."""
    worst = 0.0
    for (u, v), val in report.pair_values.items():
        xi = report.witnesses.get((u, v))
        if xi is None:
            continue
        whole = u + xi + v
        if report.kind == SLD:
            again = m.log_prob(u) + m.log_prob(v) - m.log_prob(whole)
        elif report.kind == UD:
            again = m.log_prob(whole) - m.log_prob(u) - m.log_prob(v)
        else:
            again = max(abs(x.log_prob(whole) - x.log_prob(u) - x.log_prob(v)) for x in (m, mhat))
        if math.isinf(val) or math.isinf(again):
            if val != again:
                return math.inf
            continue
        worst = max(worst, abs(again - val))
    return worst


def _as_list(measures) -> list[Measure]:
    if isinstance(measures, Measure):
        return [measures]
    return list(measures)


def extend_word(measures, v, k: int) -> tuple[Word, float]:
    """Left extension ``b`` of length ``k`` maximizing ``min_# log P#(bv) - log P#(v)``.

    Returns ``(b, ratio)``; for a single measure ``ratio >= -k log A``.
    """
    ms = _as_list(measures)
    m0 = ms[0]
    vs = _symbols(v, m0.alphabet)
    if k < 0:
        raise ValueError("k must be non-negative")
    lv = [x.log_prob(vs) if vs else 0.0 for x in ms]
    for x, l in zip(ms, lv):
        if l == -math.inf:
            raise ValueError(f"P(v) = 0 under {type(x).__name__}")
    if k == 0:
        return m0.alphabet.empty(), 0.0
    bs = word_array(m0.A, k)
    words = np.concatenate([bs, np.tile(np.asarray(vs, dtype=np.int64), (len(bs), 1))], axis=1)
    ratios = np.min(np.stack([x.log_marginals_of(words) - l for x, l in zip(ms, lv)]), axis=0)
    i = int(np.argmax(ratios))
    if ratios[i] == -math.inf:
        per = [np.max(x.log_marginals_of(words)) for x in ms]
        bad = next(j for j, p in enumerate(per) if p == -math.inf) if any(p == -math.inf for p in per) else 0
        raise LDShiftError(f"every extension of length {k} has zero mass under measure #{bad} ({type(ms[bad]).__name__})")
    return Word(tuple(bs[i].tolist()), m0.alphabet), float(ratios[i])


def ssd_from_sld_ud(m: Measure, mhat: Measure, t: int, spec: DecouplingSpec,
                    budget: int | None = DEFAULT_BUDGET) -> DecouplingReport:
    """Two-sided certificate from shared lower decoupling plus upper decoupling.

    For each pair, ``b`` of length ``tau`` extends ``v`` on the left for both
    measures, ``xi`` is the best shared lower-decoupling insert for
    ``(u, bv)``, and the witness is ``xi' = xi b`` with ``|xi'| <= 2 tau``.
    The achieved constant is checked against ``max(c_SLD + C tau, c_UD)``.
    """
    t0 = time.perf_counter()
    tau = spec.tau_at(t)
    # the tail of xi' joins v, so upper decoupling is needed for longer right words
    ud_spec = DecouplingSpec(UD, tau, spec.v_max + tau)
    c_ud = -math.inf
    for x in (m, mhat):
        r = verify_ud(x, t, ud_spec, budget)
        if not r.finite:
            raise CheckFailure(f"upper decoupling fails at t={t} (violations: {len(r.violations)})")
        c_ud = max(c_ud, r.c_star)
    A = m.A
    _check_budget(A, t + 2 * tau + spec.v_max, budget)
    words_t = word_array(A, t)
    lu, lhu = m.log_marginals(t, budget), mhat.log_marginals(t, budget)
    report = DecouplingReport(SSD, t, 2 * tau, spec.v_max, -math.inf)
    c_low = -math.inf
    c_ext = 0.0
    for L in range(1, spec.v_max + 1):
        for v in word_array(A, L):
            v = tuple(v.tolist())
            if m.log_prob(v) == -math.inf:
                continue
            b, ratio = extend_word([m, mhat], v, tau)
            c_ext = max(c_ext, -ratio)
            bv = b.symbols + v
            lbv, lhbv = m.log_prob(bv), mhat.log_prob(bv)
            for ui, u in enumerate(words_t):
                u = tuple(u.tolist())
                if lu[ui] == -math.inf:
                    continue
                best, best_xi = -math.inf, None
                for k, xis in _inserts(A, tau):
                    for xi in xis:
                        xi = tuple(xi.tolist())
                        w = u + xi + bv
                        s = min(m.log_prob(w) - lu[ui] - lbv, mhat.log_prob(w) - lhu[ui] - lhbv)
                        if s > best or (s == best and s > -math.inf and xi < best_xi):
                            best, best_xi = s, xi
                if best_xi is None:
                    key = (Word(u, m.alphabet), Word(v, m.alphabet))
                    report.pair_values[key] = math.inf
                    report.witnesses[key] = None
                    report.violations.append(key)
                    report.c_star = math.inf
                    continue
                c_low = max(c_low, -best)
                xi_p = best_xi + b.symbols
                whole = u + xi_p + v
                dev = max(abs(x.log_prob(whole) - x.log_prob(u) - x.log_prob(v)) for x in (m, mhat))
                key = (Word(u, m.alphabet), Word(v, m.alphabet))
                report.pair_values[key] = dev
                report.witnesses[key] = Word(xi_p, m.alphabet)
                if not math.isfinite(dev):
                    report.violations.append(key)
                report.c_star = max(report.c_star, dev)
    bound = max(c_low + c_ext, c_ud)
    report.elapsed_ms = 1e3 * (time.perf_counter() - t0)
    report.bound = bound
    if report.c_star > bound + 1e-12:
        raise CheckFailure(f"constructed inserts give {report.c_star} > composed bound {bound}")
    return report
