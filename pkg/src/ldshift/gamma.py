"""Gamma sequences driving the hidden renewal chain.

A :class:`GammaSpec` is a finite sum of basis terms (constant, linear,
power, ``log(1 + n/s)``, ``exp(r n)``) plus optional table overrides for
small ``n``.  Because every term has a known growth order, the slope limit
``lim gamma(t)/t`` and the radius of convergence of the renewal series can
be decided exactly instead of from sampled ratios.

The chain itself always sits at ``gamma(0) = 0``: the stationary weight of
state ``n`` is ``exp(-gamma(n))/Z`` with state 0 the renewal state.  A
nonzero value supplied at ``n = 0`` is kept for display (``value``) but the
chain uses :meth:`GammaSpec.chain_value`, which pins state 0 to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ConvergenceError

KINDS = ("const", "lin", "pow", "log1p", "exp")


@dataclass(frozen=True)
class GammaTerm:
    """``coef * basis(n)``; ``param`` is the power, the log scale or the exp rate."""

    kind: str
    coef: float
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gamma term kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "pow" and self.param <= 0:
            raise ValueError("power terms need a positive exponent")
        if self.kind == "log1p" and self.param <= 0:
            raise ValueError("log1p terms need a positive scale")

    def value(self, n: np.ndarray) -> np.ndarray:
        c, p = self.coef, self.param
        if self.kind == "const":
            return np.full(n.shape, c, dtype=float)
        if self.kind == "lin":
            return c * n
        if self.kind == "pow":
            return c * n**p
        if self.kind == "log1p":
            return c * np.log1p(n / p)
        with np.errstate(over="ignore"):
            return c * np.exp(p * n)

    def increment(self, n: np.ndarray) -> np.ndarray:
        """``value(n+1) - value(n)`` evaluated without cancellation."""
        c, p = self.coef, self.param
        if self.kind == "const":
            return np.zeros(n.shape)
        if self.kind == "lin":
            return np.full(n.shape, c, dtype=float)
        if self.kind == "pow":
            safe = np.where(n > 0, n, 1.0)
            inc = safe**p * np.expm1(p * np.log1p(1.0 / safe))
            return c * np.where(n > 0, inc, 1.0)
        if self.kind == "log1p":
            return c * np.log1p(1.0 / (p + n))
        with np.errstate(over="ignore"):
            return c * np.exp(p * n) * math.expm1(p)

    def curvature(self, n: np.ndarray) -> np.ndarray:
        """Second derivative of ``value`` in ``n``."""
        c, p = self.coef, self.param
        if self.kind in ("const", "lin"):
            return np.zeros(n.shape)
        if self.kind == "pow":
            safe = np.where(n > 0, n, 1.0)
            return c * p * (p - 1) * safe ** (p - 2)
        if self.kind == "log1p":
            return -c / (p + n) ** 2
        with np.errstate(over="ignore"):
            return c * p * p * np.exp(p * n)

    def growth_key(self):
        """Growth order relative to ``n``: ``"lin"``, ``None`` (sublinear) or a
        sortable superlinear key."""
        p = self.param
        if self.kind == "lin" or (self.kind == "pow" and p == 1):
            return "lin"
        if self.kind == "pow" and p > 1:
            return (0, p)
        if self.kind == "exp" and p > 0:
            return (1, p)
        return None


def _asarray(n) -> np.ndarray:
    return np.asarray(n, dtype=float)


@dataclass(frozen=True)
class GammaSpec:
    terms: tuple[GammaTerm, ...]
    table: tuple[tuple[int, float], ...] = ()
    epsilon: float | None = None
    label: str = ""
    _table_map: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a gamma sequence needs at least one term")
        object.__setattr__(self, "terms", terms)
        table = tuple(sorted((int(k), float(v)) for k, v in dict(self.table).items()))
        if any(k < 0 for k, _ in table):
            raise ValueError("table overrides must use non-negative indices")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_table_map", dict(table))
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", float(np.min(self.increment(np.arange(10_001)))))
        if not self.epsilon > 0:
            raise ValueError(f"gamma increments must be bounded below by some epsilon > 0, got {self.epsilon}")

    @classmethod
    def build(cls, terms: Iterable[tuple], table: Mapping[int, float] | None = None, label: str = "") -> "GammaSpec":
        return cls(tuple(GammaTerm(*t) for t in terms), tuple((table or {}).items()), None, label)

    # evaluation ---------------------------------------------------------

    def value(self, n) -> np.ndarray:
        """The sequence as written, including any value given at ``n = 0``."""
        n = _asarray(n)
        out = np.zeros(n.shape)
        for term in self.terms:
            out = out + term.value(n)
        for k, v in self.table:
            out = np.where(n == k, v, out)
        return out

    def chain_value(self, n) -> np.ndarray:
        n = _asarray(n)
        return np.where(n == 0, 0.0, self.value(n))

    def increment(self, n) -> np.ndarray:
        """``chain_value(n+1) - chain_value(n)``."""
        n0 = _asarray(n)
        n = np.atleast_1d(n0)
        out = np.zeros(n.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            for term in self.terms:
                out = out + term.increment(n)
        special = n == 0
        for k in self._table_map:
            special |= (n == k) | (n + 1 == k)
        if special.any():
            ns = n[special]
            with np.errstate(invalid="ignore"):
                out[special] = self.chain_value(ns + 1) - self.chain_value(ns)
        return out.reshape(n0.shape)

    def curvature(self, n) -> np.ndarray:
        """Second derivative of the analytic part (table overrides excluded)."""
        n = _asarray(n)
        out = np.zeros(n.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            for term in self.terms:
                out = out + term.curvature(n)
        return out

    @property
    def table_end(self) -> int:
        """First index past every table override."""
        return max((k for k, _ in self.table), default=-1) + 1

    def log_one_minus_g(self, n) -> np.ndarray:
        """``log(1 - g(n+1))`` where ``g(n+1) = exp(gamma(n) - gamma(n+1))``."""
        d = self.increment(n)
        with np.errstate(over="ignore"):
            return np.log(-np.expm1(-d))

    # asymptotics --------------------------------------------------------

    def growth(self) -> tuple[float, dict]:
        """Linear coefficient and superlinear coefficients keyed by growth order."""
        lin = 0.0
        sup: dict = {}
        for term in self.terms:
            key = term.growth_key()
            if key == "lin":
                lin += term.coef
            elif key is not None:
                sup[key] = sup.get(key, 0.0) + term.coef
        return lin, sup

    @property
    def slope_limit(self) -> float:
        lin, sup = self.growth()
        live = [k for k, c in sup.items() if c != 0]
        if live:
            return math.inf if sup[max(live)] > 0 else -math.inf
        return lin

    # normalization ------------------------------------------------------

    def log_tail(self, t: int, rel_tol: float = 1e-14, state_cap: int = 10**6) -> float:
        """``log sum_{m >= t} exp(-gamma(m))`` over the chain sequence.

        Summation stops once the geometric bound ``e^{-gamma(m)}/(1 - e^{-eps})``
        on the remainder drops below ``rel_tol`` times the partial sum.
        """
        base = float(self.chain_value(t))
        shrink = -math.expm1(-self.epsilon)
        total = 0.0
        offset = 0.0
        start = t
        chunk = 64
        while start <= state_cap:
            stop = min(start + chunk, state_cap + 1)
            inc = self.increment(np.arange(start, stop))
            cum = offset + np.concatenate(([0.0], np.cumsum(inc)))
            total += float(np.sum(np.exp(-cum[:-1])))
            offset = float(cum[-1])
            if math.exp(-offset) / shrink <= rel_tol * total:
                return -base + math.log(total)
            start = stop
            chunk = min(chunk * 2, 1 << 16)
        raise ConvergenceError(f"tail sum from n={t} did not certify within state cap {state_cap}")

    def check(self, n_max: int = 10_000, slope_at: int = 1000) -> dict:
        """Verify the epsilon-increment discipline and the slope declaration."""
        inc = self.increment(np.arange(n_max + 1))
        min_inc = float(np.min(inc))
        slope = self.slope_limit
        ratio = float(self.chain_value(slope_at)) / slope_at
        if math.isinf(slope):
            slope_ok = bool(math.isinf(ratio) or np.sign(ratio) == np.sign(slope)) and abs(ratio) > 1.0
        else:
            slope_ok = abs(ratio - slope) <= 0.1 * max(abs(slope), 1e-300)
        return {
            "min_increment": min_inc,
            "epsilon_ok": min_inc >= self.epsilon * (1 - 1e-12),
            "slope_limit": slope,
            "sampled_ratio": ratio,
            "slope_ok": slope_ok,
        }


def linear(a: float = 1.0) -> GammaSpec:
    return GammaSpec.build([("lin", a)], label=f"{a}n")


def quadratic(c: float = 1.0) -> GammaSpec:
    return GammaSpec.build([("pow", c, 2.0)], label=f"{c}n^2")


def linlog(a: float, b: float, scale: float, const: float = 0.0) -> GammaSpec:
    """``const + a n + b log(1 + n/scale)``."""
    terms = [("lin", a), ("log1p", b, scale)]
    if const:
        terms.insert(0, ("const", const))
    return GammaSpec.build(terms)


def exponential(rate: float, coef: float = 1.0) -> GammaSpec:
    return GammaSpec.build([("exp", coef, rate)])


def tabular(table: Mapping[int, float], tail: GammaSpec) -> GammaSpec:
    """Explicit values for small ``n`` on top of an analytic tail."""
    merged = dict(tail.table)
    merged.update(table)
    return GammaSpec(tail.terms, tuple(merged.items()), None, tail.label)
