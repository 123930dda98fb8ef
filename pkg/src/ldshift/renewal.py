"""Exact pressure of the entropy production for hidden Markov renewal pairs.

For a pair of gamma sequences the return-time generating function

    U_alpha(x) = sum_t u_t(alpha) x^t,
    log u_t = (alpha+1) [log(1-g(t+1)) - gamma(t)] - alpha [log(1-g^(t+1)) - gamma^(t)]

determines the pressure through ``q(alpha) = -log rho(alpha)`` with
``rho = sup{x >= 0 : x U_alpha(x) <= 1}``.  Either ``x U(x) = 1`` has a root
below the radius ``kappa`` of ``U`` (root case) or it stays below one up to
``kappa`` and ``rho = kappa`` (radius case).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .curves import PressureCurve, fmt, write_csv
from .errors import BudgetExceeded, ConvergenceError
from .gamma import GammaSpec

ROOT = "RootOfXU"
RADIUS = "RadiusBound"
DEGENERATE = "Degenerate"


def _affine(a: float, x: np.ndarray, b: float, y: np.ndarray) -> np.ndarray:
    """``a*x - b*y`` where a zero coefficient kills its (possibly infinite) term."""
    with np.errstate(invalid="ignore", over="ignore"):
        left = a * x if a != 0 else np.zeros_like(x)
        right = b * y if b != 0 else np.zeros_like(y)
        return left - right


class _Tables:
    """Lazily grown arrays ``A_t = log(1-g(t+1)) - gamma(t)`` for one sequence.

    Growth is serialized and deterministic, so cached and fresh values are
    bit-identical.
    """

    def __init__(self, spec: GammaSpec):
        self.spec = spec
        self.lock = threading.Lock()
        self.arr = np.empty(0)

    def get(self, stop: int) -> np.ndarray:
        arr = self.arr
        if len(arr) >= stop:
            return arr
        with self.lock:
            if len(self.arr) < stop:
                size = max(stop, 2 * len(self.arr), 1024)
                n = np.arange(size, dtype=float)
                with np.errstate(over="ignore", invalid="ignore"):
                    self.arr = self.spec.log_one_minus_g(n) - self.spec.chain_value(n)
            return self.arr


@dataclass
class SeriesValue:
    value: float
    exceeded: bool = False  # early exit: value is a partial sum already above 1
    terms: int = 0
    tail: float = 0.0
    approximate: bool = False  # tail estimated from a power law, not bounded


@dataclass(frozen=True)
class RenewalPair:
    gamma: GammaSpec
    gamma_hat: GammaSpec
    rel_tol: float = 1e-14
    max_terms: int = 10**6
    boundary_tol: float = 1e-7
    x_tol: float = 1e-14
    name: str = ""
    _tables: tuple = field(init=False, repr=False, compare=False, hash=False)
    _shape_cache: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.boundary_tol > 0 and self.x_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_terms < 64:
            raise ValueError("max_terms must be at least 64")
        object.__setattr__(self, "_tables", (_Tables(self.gamma), _Tables(self.gamma_hat)))
        object.__setattr__(self, "_shape_cache", {})

    # coefficients -------------------------------------------------------

    def log_u(self, alpha: float, start: int, stop: int) -> np.ndarray:
        A = self._tables[0].get(stop)[start:stop]
        B = self._tables[1].get(stop)[start:stop]
        return _affine(alpha + 1.0, A, alpha, B)

    def dlog_u(self, start: int, stop: int) -> np.ndarray:
        A = self._tables[0].get(stop)[start:stop]
        B = self._tables[1].get(stop)[start:stop]
        with np.errstate(invalid="ignore"):
            return A - B

    def monotone_from(self, alpha: float) -> int:
        """Index past which the increments of ``log u_t`` are monotone.

        Tail bounds extrapolate the recent increments, which is only sound
        once ``(alpha+1) gamma - alpha gamma^`` has a fixed convexity sign.
        The last sign change of its second derivative is located on a dense
        integer-then-geometric grid up to ``1e15``; the small ``log(1-g)``
        corrections are not included.
        """
        key = float(alpha)
        hit = self._shape_cache.get(key)
        if hit is not None:
            return hit
        n = np.unique(np.concatenate([np.arange(4096.0), np.round(np.geomspace(4096, 1e15, 4000))]))
        curv = _affine(alpha + 1.0, self.gamma.curvature(n), alpha, self.gamma_hat.curvature(n))
        keep = ~np.isnan(curv)
        sgn, grid = np.sign(curv[keep]), n[keep]
        start = 0
        nz = np.nonzero(sgn)[0]
        if nz.size:
            final = sgn[nz[-1]]
            wrong = np.nonzero(sgn == -final)[0]
            if wrong.size:
                start = int(grid[wrong[-1] + 1])
        start = max(start, self.gamma.table_end + 2, self.gamma_hat.table_end + 2)
        self._shape_cache[key] = start
        return start

    def growth_coefficients(self, alpha: float) -> tuple[float, dict]:
        """Linear and superlinear coefficients of ``(alpha+1) gamma - alpha gamma^``."""
        lin, sup = self.gamma.growth()
        lin_h, sup_h = self.gamma_hat.growth()
        a, b = alpha + 1.0, alpha
        comb = {}
        for key in set(sup) | set(sup_h):
            c = (a * sup.get(key, 0.0) if a else 0.0) - (b * sup_h.get(key, 0.0) if b else 0.0)
            comb[key] = c
        return a * lin - b * lin_h, comb

    # series -------------------------------------------------------------

    def _accumulate(self, chunk_fn, ratio_floor: float, early_exit: bool, settle: int = 0) -> SeriesValue:
        """Sum ``exp(l_t) * sign_t`` with tail control.

        The tail after the current chunk is bounded geometrically with
        ratio ``max(recent max increment, ratio_floor)`` when that is below
        one; otherwise (and in addition) a power-law tail estimate based on
        the local decay exponent is used.  Neither is trusted before index
        ``settle``, where the increments start to be monotone.
        """
        total = 0.0
        mag = 0.0
        start = 0
        chunk = 64
        prev = None
        while True:
            stop = min(start + chunk, self.max_terms)
            logs, signs = chunk_fn(start, stop)
            if np.isnan(logs).any():
                raise ConvergenceError("undefined series coefficient (inf - inf) encountered")
            with np.errstate(over="ignore"):
                vals = np.exp(logs)
            if early_exit:
                running = total + np.cumsum(vals)
                hit = np.nonzero(running > 1.0)[0]
                if hit.size:
                    return SeriesValue(float(running[hit[0]]), exceeded=True, terms=start + int(hit[0]) + 1)
            part = vals if signs is None else vals * signs
            total += float(np.sum(part))
            mag += float(np.sum(vals))
            if math.isinf(mag):
                return SeriesValue(math.inf, exceeded=early_exit, terms=stop)
            seq = logs if prev is None else np.concatenate(([prev], logs))
            prev = float(logs[-1])
            last = prev
            if last == -math.inf:
                if np.all(np.isneginf(logs[len(logs) // 2:])):
                    return SeriesValue(total, terms=stop)
            incs = np.diff(seq)
            incs = incs[np.isfinite(incs)]
            geo = math.inf
            pl = math.inf
            p_est = -math.inf
            if incs.size:
                recent = float(np.max(incs[-max(1, incs.size // 2):]))
                r = max(math.exp(min(recent, 0.0)) if recent < 0 else 1.0, ratio_floor)
                if r < 1.0:
                    geo = math.exp(last) * r / (1.0 - r)
                N = stop - 1
                p_est = -N * float(incs[-1])
                if p_est > 1.0 and N > 0:
                    pl = math.exp(last + p_est * math.log(N) + (1.0 - p_est) * math.log(N + 0.5)) / (p_est - 1.0)
            if stop < settle:
                if stop >= self.max_terms:
                    raise ConvergenceError(
                        f"series terms are not monotone before n={settle}, beyond max_terms={self.max_terms}")
                start = stop
                chunk = min(chunk * 2, 1 << 16)
                continue
            if geo <= self.rel_tol * mag:
                return SeriesValue(total, terms=stop, tail=geo)
            if pl <= self.boundary_tol * mag:
                return SeriesValue(total + pl, terms=stop, tail=pl, approximate=True)
            if early_exit and math.isfinite(pl) and total + 2.0 * pl < 1.0:
                return SeriesValue(total + pl, terms=stop, tail=pl, approximate=True)
            if stop >= self.max_terms:
                if math.isfinite(pl):
                    return SeriesValue(total + pl, terms=stop, tail=pl, approximate=True)
                if ratio_floor >= 1.0 and p_est <= 1.0:
                    # terms decay no faster than 1/n at the radius: divergent
                    return SeriesValue(math.inf, exceeded=early_exit, terms=stop)
                raise ConvergenceError(
                    f"series not certified after {stop} terms (partial sum {total:.6g}, "
                    f"tail estimate {min(geo, pl):.3g})"
                )
            start = stop
            chunk = min(chunk * 2, 1 << 16)

    def F(self, alpha: float, x: float, kappa: float | None = None) -> SeriesValue:
        """``x U_alpha(x)``; early exit once a partial sum exceeds one."""
        if x <= 0:
            return SeriesValue(0.0)
        return self.F_log(alpha, math.log(x), kappa)

    def F_log(self, alpha: float, logx: float, kappa: float | None = None) -> SeriesValue:
        """:meth:`F` at ``x = exp(logx)``, usable far below the float range of ``x``."""
        if kappa is None:
            kappa = self.kappa(alpha)
        floor = 0.0 if math.isinf(kappa) else math.exp(logx - math.log(kappa))

        def chunk(start, stop):
            n = np.arange(start, stop)
            return self.log_u(alpha, start, stop) + (n + 1) * logx, None

        return self._accumulate(chunk, floor, early_exit=True, settle=self.monotone_from(alpha))

    # radius and root ----------------------------------------------------

    def kappa(self, alpha: float) -> float:
        """Radius of convergence of ``U_alpha`` from exact growth bookkeeping."""
        lin, sup = self.growth_coefficients(alpha)
        live = [k for k, c in sup.items() if c != 0]
        if live:
            return math.inf if sup[max(live)] > 0 else 0.0
        return math.exp(lin)

    def kappa_derivative(self, alpha: float) -> float:
        k = self.kappa(alpha)
        if k == 0 or math.isinf(k):
            return math.nan
        return k * (self.gamma.growth()[0] - self.gamma_hat.growth()[0])


def u_coefficient(pair: RenewalPair, t: int, alpha: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    with np.errstate(over="ignore"):
        return float(np.exp(pair.log_u(alpha, t, t + 1)[0]))


def kappa(pair: RenewalPair, alpha: float) -> float:
    return pair.kappa(alpha)


@dataclass
class RhoResult:
    alpha: float
    rho: float
    case: str
    kappa: float
    iterations: int = 0
    residual: float | None = None
    approximate: bool = False
    log_rho: float | None = None  # kept for roots below the float range

    @property
    def q(self) -> float:
        if self.log_rho is not None:
            return -self.log_rho
        return math.inf if self.rho == 0 else -math.log(self.rho)


def rho_solve(pair: RenewalPair, alpha: float, undecided: str = "raise") -> RhoResult:
    """Solve for ``rho(alpha)``.

    When ``x U(x)`` at the radius is within the tail uncertainty of one the
    case cannot be decided; ``undecided="radius"`` then returns ``rho = kappa``
    (true in both cases up to that uncertainty) instead of raising.
    """
    if undecided not in ("raise", "radius"):
        raise ValueError("undecided must be 'raise' or 'radius'")
    alpha = float(alpha)
    kap = pair.kappa(alpha)
    if kap == 0:
        return RhoResult(alpha, 0.0, DEGENERATE, kap)
    approx = False
    if math.isfinite(kap):
        at_k = pair.F(alpha, kap, kap)
        if not at_k.exceeded and at_k.value < 1.0:
            if at_k.approximate and at_k.value + 0.05 * at_k.tail >= 1.0:
                if undecided == "radius":
                    return RhoResult(alpha, kap, RADIUS, kap, approximate=True)
                raise ConvergenceError(f"cannot decide x U(x) < 1 at the radius (gap {1 - at_k.value:.3g})")
            return RhoResult(alpha, kap, RADIUS, kap, residual=None, approximate=at_k.approximate)
        hi = math.log(kap)
    else:
        hi = 0.0
        step = 1.0
        while not _above(pair.F_log(alpha, hi, kap)):
            hi += step
            step *= 2.0
            if hi > 700.0:
                raise ConvergenceError("no upper bracket for the root of x U(x) = 1")
    lo, step = hi - 1.0, 1.0
    while _above(pair.F_log(alpha, lo, kap)):
        hi = lo
        step *= 2.0
        lo -= step
        if lo < -1e9:
            raise ConvergenceError("no lower bracket for the root of x U(x) = 1")
    # bisection in log x: the absolute tolerance on log x is a relative one on x
    it = 0
    f_lo = None
    while hi - lo > pair.x_tol and it < 400:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        v = pair.F_log(alpha, mid, kap)
        if _above(v):
            hi = mid
        else:
            lo, f_lo = mid, v
        it += 1
    if f_lo is None:
        f_lo = pair.F_log(alpha, lo, kap)
    approx = approx or f_lo.approximate
    return RhoResult(alpha, math.exp(lo), ROOT, kap, iterations=it, residual=abs(1.0 - f_lo.value),
                     approximate=approx, log_rho=lo)


def _above(v: SeriesValue) -> bool:
    return v.exceeded or v.value > 1.0


def _root_derivative(pair: RenewalPair, alpha: float, logr: float, kap: float) -> tuple[float, bool]:
    """``q'`` from implicit differentiation of ``rho U_alpha(rho) = 1``."""
    floor = 0.0 if math.isinf(kap) else math.exp(logr - math.log(kap))

    def num(start, stop):
        n = np.arange(start, stop)
        d = pair.dlog_u(start, stop)
        with np.errstate(divide="ignore"):
            logs = pair.log_u(alpha, start, stop) + (n + 1) * logr + np.log(np.abs(d))
        return logs, np.sign(d)

    def den(start, stop):
        n = np.arange(start, stop)
        return pair.log_u(alpha, start, stop) + (n + 1) * logr + np.log(n + 1.0), None

    settle = pair.monotone_from(alpha)
    N = pair._accumulate(num, floor, early_exit=False, settle=settle)
    D = pair._accumulate(den, floor, early_exit=False, settle=settle)
    # rho' = -N / (D / rho) and q' = -rho'/rho = N / D
    return N.value / D.value, (N.approximate or D.approximate)


def _derivative_for_case(pair, alpha, res: RhoResult, case: str) -> tuple[float, bool]:
    if case == DEGENERATE:
        return math.inf, False
    if case == RADIUS:
        kd = pair.kappa_derivative(alpha)
        return -kd / res.kappa, False
    return _root_derivative(pair, alpha, -res.q, res.kappa)


def q_derivative(pair: RenewalPair, alpha: float, res: RhoResult | None = None) -> float:
    """Analytic ``q'(alpha)`` in the case holding at ``alpha``."""
    res = res or rho_solve(pair, alpha)
    return _derivative_for_case(pair, alpha, res, res.case)[0]


@dataclass
class OneSided:
    alpha: float
    left: float
    right: float
    left_case: str
    right_case: str

    @property
    def jump(self) -> float:
        return abs(self.right - self.left)


def one_sided_derivatives(pair: RenewalPair, alpha: float, h: float = 1e-6) -> OneSided:
    """Left and right derivatives of ``q``, each from the case holding on that side."""
    res = rho_solve(pair, alpha, undecided="radius")
    lc = rho_solve(pair, alpha - h).case
    rc = rho_solve(pair, alpha + h).case
    left = _derivative_for_case(pair, alpha, res, lc)[0] if res.case != DEGENERATE else math.nan
    right = _derivative_for_case(pair, alpha, res, rc)[0] if res.case != DEGENERATE else math.nan
    return OneSided(alpha, left, right, lc, rc)


def _case_of(pair, alpha):
    return rho_solve(pair, alpha).case


def locate_transitions(pair: RenewalPair, alphas, cases=None, tol: float = 1e-10) -> list[tuple[float, str, str]]:
    """Bisect on the case tag between grid neighbours that disagree."""
    alphas = list(map(float, alphas))
    if cases is None:
        cases = [_case_of(pair, a) for a in alphas]
    out = []
    for (a0, c0), (a1, c1) in zip(zip(alphas, cases), zip(alphas[1:], cases[1:])):
        if c0 == c1:
            continue
        lo, hi = a0, a1
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            try:
                cm = _case_of(pair, mid)
            except ConvergenceError:
                break
            if cm == c0:
                lo = mid
            else:
                hi = mid
        out.append((0.5 * (lo + hi), c0, c1))
    return out


@dataclass
class QCurve:
    curve: PressureCurve
    results: list[RhoResult]
    derivatives: np.ndarray
    transitions: list[tuple[float, str, str]]

    def rows(self):
        for r in self.results:
            yield (r.alpha, r.rho, r.kappa, r.q)

    def to_csv(self, path) -> None:
        write_csv(path, ["alpha", "rho", "kappa", "q"], self.rows())


def q_curve(pair: RenewalPair, alpha_grid, threads: int | None = 1, derivatives: bool = True,
            transitions: bool = True) -> QCurve:
    grid = np.asarray(sorted(map(float, alpha_grid)))
    results = pmap(lambda a: rho_solve(pair, a), grid, threads)

    def deriv(res):
        try:
            return _derivative_for_case(pair, res.alpha, res, res.case)[0]
        except ConvergenceError:
            return math.nan

    ders = np.array(pmap(deriv, results, threads) if derivatives else [math.nan] * len(grid))
    trans = locate_transitions(pair, grid, [r.case for r in results]) if transitions else []
    curve = PressureCurve(grid, np.array([r.q for r in results]), t=None, exact=True,
                          provenance=tuple(r.case for r in results))
    return QCurve(curve, results, ders, trans)


def validate_renewal(pair: RenewalPair, t_max: int, alpha: float, budget: int = 2**20) -> dict:
    """Renewal recursion against brute-force sums of ``zeta_{t,alpha}`` over words.

    ``p_t(w) = P(a w a) / P(a)`` is taken from the hidden renewal measures, so
    the two sides share nothing beyond the gamma sequences.
    """
    from .measures import HiddenRenewal
    from .words import word_array

    if 2**t_max > budget:
        raise BudgetExceeded(f"2^{t_max} words exceeds budget {budget}")
    P, Ph = HiddenRenewal(pair.gamma), HiddenRenewal(pair.gamma_hat)
    a1 = alpha + 1.0
    u = np.exp(pair.log_u(alpha, 0, t_max + 1))
    r = np.zeros(t_max + 1)
    for t in range(t_max + 1):
        r[t] = sum(u[k] * r[t - 1 - k] for k in range(t)) + u[t]

    def log_p(m, t):
        words = word_array(2, t)
        framed = np.concatenate([np.zeros((len(words), 1), int), words, np.zeros((len(words), 1), int)], axis=1)
        return m.log_marginals_of(framed) - m.log_prob((0,))

    brute = np.zeros(t_max + 1)
    logp_cache = {}
    zeta_defect = 0.0
    for t in range(t_max + 1):
        lp, lph = log_p(P, t), log_p(Ph, t)
        logp_cache[t] = _affine(a1, lp, alpha, lph)
        brute[t] = float(np.sum(np.exp(logp_cache[t])))
    # multiplicativity zeta(u a v) = zeta(u) zeta(v)
    for t in range(1, t_max + 1):
        words = word_array(2, t)
        lz = logp_cache[t]
        for i in range(t):
            mask = words[:, i] == 0
            if not mask.any():
                continue
            left = words[mask, :i]
            right = words[mask, i + 1:]
            li = left @ (2 ** np.arange(i - 1, -1, -1)) if i else np.zeros(mask.sum(), int)
            ri = right @ (2 ** np.arange(t - i - 2, -1, -1)) if t - i - 1 else np.zeros(mask.sum(), int)
            pred = logp_cache[i][li] + logp_cache[t - i - 1][ri]
            zeta_defect = max(zeta_defect, float(np.max(np.abs(pred - lz[mask]))))
    rel = np.abs(r - brute) / np.abs(brute)
    return {
        "alpha": alpha,
        "t_max": t_max,
        "recursion": r.tolist(),
        "brute_force": brute.tolist(),
        "max_rel_defect": float(np.max(rel)),
        "zeta_log_defect": zeta_defect,
    }


# presets -----------------------------------------------------------------

def _g(terms, table=None, label=""):
    return GammaSpec.build(terms, table, label)


def preset(k: int, **tolerances) -> RenewalPair:
    """The six worked pairs (``c = 1/2`` where a free constant appears)."""
    c = 0.5
    specs = {
        1: (_g([("lin", 1.0)], label="n"), _g([("pow", 1.0, 2.0)], label="n^2")),
        2: (_g([("lin", 1.0)], label="n"), _g([("exp", 1.0, 2.0)], label="exp(2n)")),
        3: (_g([("lin", 1.0), ("pow", c, 2.0)], label="n + n^2/2"), _g([("pow", 1.0, 2.0)], label="n^2")),
        4: (_g([("pow", c, 2.0)], label="n^2/2"), _g([("pow", 1.0, 2.0), ("pow", 1.0, 1.5)], label="n^2 + n^1.5")),
        5: (_g([("lin", 1.0)], label="n"), _g([("lin", 2.0), ("log1p", -2.0, 2.0)], label="2n - 2log(1+n/2)")),
        6: (
            _g([("lin", 1.0), ("log1p", 5.0, 5.0)], {0: 0.0, 1: 0.01}, label="n + 5log(1+n/5), gamma(1)=0.01"),
            _g([("const", 10.0), ("lin", 2.0), ("log1p", 5.0, 5.0)], label="10 + 2n + 5log(1+n/5)"),
        ),
    }
    if k not in specs:
        raise ValueError(f"preset must be one of 1..6, got {k}")
    g, gh = specs[k]
    return RenewalPair(g, gh, name=f"example-{k}", **tolerances)


def sweep_csv(pair: RenewalPair, alphas, path, threads: int | None = 1) -> QCurve:
    qc = q_curve(pair, alphas, threads=threads, derivatives=False, transitions=False)
    qc.to_csv(path)
    return qc


__all__ = [
    "RenewalPair", "RhoResult", "QCurve", "OneSided", "SeriesValue", "preset", "u_coefficient", "kappa",
    "rho_solve", "q_curve", "q_derivative", "one_sided_derivatives", "locate_transitions",
    "validate_renewal", "sweep_csv", "ROOT", "RADIUS", "DEGENERATE", "fmt",
]
