"""Shift-invariant measures on finite-alphabet words, evaluated as log-marginals.

Every measure maps a word ``w`` of length ``t`` to ``log P_t(w)`` (``-inf``
for words outside the support, ``0`` for the empty word).  Vectorized
evaluation over an integer array of words (one word per row) is available
through :meth:`Measure.log_marginals_of`; :meth:`Measure.log_marginals`
evaluates all of Omega_t in lexicographic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import AbsoluteContinuityError, AlphabetMismatch, BudgetExceeded, LDShiftError
from .gamma import GammaSpec
from .words import DEFAULT_BUDGET, Alphabet, Involution, Word, word_array


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


class Measure:
    """Base class; subclasses implement :meth:`log_marginals_of`."""

    alphabet: Alphabet
    samplable = False

    @property
    def A(self) -> int:
        return self.alphabet.size

    def _coerce(self, w) -> tuple[int, ...]:
        if isinstance(w, Word):
            if w.alphabet.size != self.A:
                raise AlphabetMismatch(f"word over alphabet of size {w.alphabet.size}, measure has {self.A}")
            return w.symbols
        if isinstance(w, str):
            return self.alphabet.parse(w).symbols
        syms = tuple(int(s) for s in w)
        if any(not 0 <= s < self.A for s in syms):
            raise AlphabetMismatch(f"symbol outside alphabet of size {self.A}: {syms}")
        return syms

    def log_prob(self, w) -> float:
        syms = self._coerce(w)
        if not syms:
            return 0.0
        return float(self.log_marginals_of(np.asarray([syms], dtype=np.int64))[0])

    def log_marginals_of(self, words: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_marginals(self, t: int, budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
        """``log P_t`` on all of Omega_t in lexicographic order."""
        if t == 0:
            return np.zeros(1)
        return self.log_marginals_of(word_array(self.A, t, budget))

    def sample(self, t: int, n: int, rng: np.random.Generator) -> np.ndarray:
        raise LDShiftError(f"{type(self).__name__} is not samplable")


# i.i.d. ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Bernoulli(Measure):
    p: tuple[float, ...]
    alphabet: Alphabet = None
    samplable = True

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("Bernoulli needs a probability vector of length >= 2")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must be non-negative and sum to 1 (sum = {p.sum():.15g})")
        object.__setattr__(self, "p", tuple(p.tolist()))
        if self.alphabet is None:
            object.__setattr__(self, "alphabet", Alphabet.letters(p.size))
        elif self.alphabet.size != p.size:
            raise AlphabetMismatch("alphabet size differs from probability vector length")
        object.__setattr__(self, "_logp", _log(p))

    def log_marginals_of(self, words):
        return self._logp[words].sum(axis=1)

    def sample(self, t, n, rng):
        return rng.choice(self.A, size=(n, t), p=np.asarray(self.p))


class Uniform(Bernoulli):
    def __init__(self, A: int = 2, alphabet: Alphabet | None = None):
        A = alphabet.size if alphabet is not None else A
        super().__init__(tuple([1.0 / A] * A), alphabet)

    def sample(self, t, n, rng):
        return rng.integers(0, self.A, size=(n, t))


# Markov ------------------------------------------------------------------


def stationary_vector(P: np.ndarray) -> np.ndarray:
    """Left Perron vector of a row-stochastic matrix via a linear solve."""
    N = P.shape[0]
    M = np.vstack([P.T - np.eye(N), np.ones(N)])
    rhs = np.zeros(N + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class Markov(Measure):
    P: np.ndarray
    pi: np.ndarray | None = None
    alphabet: Alphabet = None
    check: bool = True
    samplable = True

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise ValueError("transition matrix must be square of size >= 2")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition matrix must be non-negative with rows summing to 1")
        pi = stationary_vector(P) if self.pi is None else np.array(self.pi, dtype=float)
        if pi.shape != (P.shape[0],):
            raise ValueError("stationary vector has the wrong length")
        if self.check and np.max(np.abs(pi @ P - pi)) > 1e-12:
            raise ValueError("pi is not stationary for P (pass check=False to keep it anyway)")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi", pi)
        if self.alphabet is None:
            object.__setattr__(self, "alphabet", Alphabet.letters(P.shape[0]))
        object.__setattr__(self, "_logP", _log(P))
        object.__setattr__(self, "_logpi", _log(pi))

    def log_marginals_of(self, words):
        out = self._logpi[words[:, 0]]
        if words.shape[1] > 1:
            out = out + self._logP[words[:, :-1], words[:, 1:]].sum(axis=1)
        return out

    def sample(self, t, n, rng):
        out = np.empty((n, t), dtype=np.int64)
        if t == 0:
            return out
        cum = np.cumsum(self.P, axis=1)
        out[:, 0] = rng.choice(self.A, size=n, p=self.pi)
        for i in range(1, t):
            u = rng.random(n)
            rows = cum[out[:, i - 1]]
            out[:, i] = np.minimum((u[:, None] >= rows).sum(axis=1), self.A - 1)
        return out


# matrix products ---------------------------------------------------------


def perron_data(S: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000):
    """Perron eigenvalue with right/left eigenvectors by power iteration on ``S + I``
    (the shift removes periodicity without changing eigenvectors)."""
    N = S.shape[0]
    shifted = S + np.eye(N)

    def iterate(M):
        x = np.full(N, 1.0 / N)
        for _ in range(max_iter):
            y = M @ x
            y /= y.sum()
            if np.max(np.abs(y - x)) <= tol:
                return y
            x = y
        from .errors import ConvergenceError

        raise ConvergenceError("power iteration did not converge")

    v = iterate(shifted)
    w = iterate(shifted.T)
    lam = float((S @ v).sum() / v.sum())
    return lam, v, w


@dataclass(frozen=True, eq=False)
class MatrixProduct(Measure):
    """Marginals ``(w, M(x_1)...M(x_t) v) / (lam^t (w, v))``."""

    M: Sequence[np.ndarray]
    v: np.ndarray | None = None
    w: np.ndarray | None = None
    lam: float | None = None
    alphabet: Alphabet = None

    def __post_init__(self):
        M = np.array([np.asarray(m, dtype=float) for m in self.M])
        if M.ndim != 3 or M.shape[1] != M.shape[2] or M.shape[0] < 2:
            raise ValueError("need at least two square matrices of equal size")
        if np.any(M < 0):
            raise ValueError("matrix entries must be non-negative")
        S = M.sum(axis=0)
        lam, v, w = perron_data(S)
        v = v if self.v is None else np.asarray(self.v, dtype=float)
        w = w if self.w is None else np.asarray(self.w, dtype=float)
        lam = lam if self.lam is None else float(self.lam)
        if np.any(v <= 0) or np.any(w <= 0):
            raise ValueError("Perron vectors must be strictly positive")
        if np.max(np.abs(S @ v - lam * v)) > 1e-9 or np.max(np.abs(S.T @ w - lam * w)) > 1e-9:
            raise ValueError("v, w are not Perron eigenvectors of sum_a M(a) for lam")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "lam", lam)
        if self.alphabet is None:
            object.__setattr__(self, "alphabet", Alphabet.letters(M.shape[0]))
        object.__setattr__(self, "_lognorm", math.log(float(w @ v)))

    def log_marginals_of(self, words):
        n, t = words.shape
        X = np.tile(self.v, (n, 1))
        acc = np.zeros(n)
        for pos in range(t - 1, -1, -1):
            X = np.einsum("ijk,ik->ij", self.M[words[:, pos]], X)
            scale = X.max(axis=1)
            safe = np.where(scale > 0, scale, 1.0)
            X = X / safe[:, None]
            acc += _log(scale)
        with np.errstate(divide="ignore"):
            acc += _log(X @ self.w)
        return acc - t * math.log(self.lam) - self._lognorm


# hidden renewal ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HiddenRenewal(Measure):
    """Image of the renewal chain on ``{0,1,2,...}`` under ``0 -> a``, ``n >= 1 -> b``.

    The chain climbs ``n -> n+1`` with probability ``g(n+1) = e^{gamma(n) -
    gamma(n+1)}`` and otherwise returns to 0; its stationary law is
    ``Q_1(n) = e^{-gamma(n)}/Z``.  Summing over the hidden start state
    telescopes: a word opening with ``b^L a`` (``L >= 0``) has prefix mass
    ``e^{-gamma(L)}/Z``, and ``b^t`` has mass ``sum_{m >= t} e^{-gamma(m)}/Z``.
    After the first ``a`` the hidden state is determined by the word.
    """

    gamma: GammaSpec
    rel_tol: float = 1e-14
    state_cap: int = 10**6
    alphabet: Alphabet = field(default_factory=lambda: Alphabet(("a", "b")))
    samplable = True

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("truncation tolerance must be positive")
        if self.alphabet.size != 2:
            raise AlphabetMismatch("hidden renewal measures live on a two-letter alphabet")
        object.__setattr__(self, "_logZ", self.gamma.log_tail(0, self.rel_tol, self.state_cap))
        object.__setattr__(self, "_tails", {})

    @property
    def log_Z(self) -> float:
        return self._logZ

    def _log_tail(self, t: int) -> float:
        tails = self._tails
        if t not in tails:
            tails[t] = self.gamma.log_tail(t, self.rel_tol, self.state_cap)
        return tails[t]

    def log_marginals_of(self, words):
        n, t = words.shape
        is_a = words == 0
        has_a = is_a.any(axis=1)
        lead = np.where(has_a, is_a.argmax(axis=1), t)
        k = np.arange(t + 1, dtype=float)
        d = self.gamma.increment(k)
        l1mg = self.gamma.log_one_minus_g(k)
        out = np.where(has_a, -self.gamma.chain_value(lead.astype(float)), self._log_tail(t)) - self._logZ
        state = np.zeros(n, dtype=np.int64)
        for i in range(1, t):
            active = i > lead
            b = words[:, i] == 1
            out = out + np.where(active, np.where(b, -d[state], l1mg[state]), 0.0)
            state = np.where(active, np.where(b, state + 1, 0), state)
        return out

    def sample(self, t, n, rng):
        # initial state from Q_1 by inverse CDF over enough states
        m = 64
        while True:
            k = np.arange(m, dtype=float)
            logw = -self.gamma.chain_value(k) - self._logZ
            if math.exp(float(logw[-1])) < 1e-17 or m >= self.state_cap:
                break
            m *= 2
        cdf = np.cumsum(np.exp(logw))
        out = np.empty((n, t), dtype=np.int64)
        if t == 0:
            return out
        state = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
        kk = np.arange(m + t + 1, dtype=float)
        g = np.exp(-self.gamma.increment(kk))
        for i in range(t):
            out[:, i] = np.where(state == 0, 0, 1)
            climb = rng.random(n) < g[state]
            state = np.where(climb, state + 1, 0)
        return out


# derived measures --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ThetaLift(Measure):
    base: Measure
    theta: Involution

    def __post_init__(self):
        if self.theta.size != self.base.A:
            raise AlphabetMismatch("involution and measure use alphabets of different sizes")

    @property
    def alphabet(self):
        return self.base.alphabet

    def log_marginals_of(self, words):
        return self.base.log_marginals_of(self.theta.apply_array(words))

    def log_marginals(self, t, budget=DEFAULT_BUDGET):
        if t == 0:
            return np.zeros(1)
        return self.base.log_marginals(t, budget)[self.theta.permutation(t)]


@dataclass(frozen=True, eq=False)
class ProductPair(Measure):
    """``P(u) Phat(v)`` on the product alphabet; symbol ``(x, y)`` has index ``x*A + y``."""

    first: Measure
    second: Measure

    def __post_init__(self):
        if self.first.A != self.second.A:
            raise AlphabetMismatch("product pair needs both measures over the same alphabet")
        labs = self.first.alphabet.labels
        sep = "" if self.first.alphabet.single_char else "|"
        labels = tuple(f"{x}{sep}{y}" for x in labs for y in labs)
        object.__setattr__(self, "_alphabet", Alphabet(labels))

    @property
    def alphabet(self):
        return self._alphabet

    @property
    def base_size(self) -> int:
        return self.first.A

    def split(self, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return words // self.base_size, words % self.base_size

    def log_marginals_of(self, words):
        u, v = self.split(words)
        return self.first.log_marginals_of(u) + self.second.log_marginals_of(v)

    def swap(self) -> Involution:
        A = self.base_size
        return Involution.letterwise([(s % A) * A + s // A for s in range(A * A)])


@dataclass(frozen=True, eq=False)
class Mixture(Measure):
    """Convex combination of measures over a common alphabet."""

    components: tuple[Measure, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) != w.size or w.size == 0:
            raise ValueError("one weight per component required")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("mixture weights must be a probability vector")
        if len({c.A for c in self.components}) != 1:
            raise AlphabetMismatch("mixture components must share an alphabet")
        object.__setattr__(self, "_logw", _log(w))

    @property
    def alphabet(self):
        return self.components[0].alphabet

    def log_marginals_of(self, words):
        stack = np.array([lw + c.log_marginals_of(words) for lw, c in zip(self._logw, self.components)])
        return logsumexp(stack, axis=0)


# operations --------------------------------------------------------------


def log_marginal(m: Measure, w) -> float:
    return m.log_prob(w)


def stationarity_check(m: Measure, t_max: int, budget: int | None = DEFAULT_BUDGET) -> dict:
    """Largest defect of ``sum_a P(wa) = P(w) = sum_a P(aw)`` over ``|w| <= t_max``."""
    A = m.A
    if budget is not None and A ** (t_max + 1) > budget:
        raise BudgetExceeded(f"A^{t_max + 1} exceeds budget {budget}")
    worst = 0.0
    worst_t = 0
    cur = np.exp(m.log_marginals(0))
    for t in range(t_max + 1):
        nxt = np.exp(m.log_marginals(t + 1))
        right = nxt.reshape(A**t, A).sum(axis=1)
        left = nxt.reshape(A, A**t).sum(axis=0)
        d = max(float(np.max(np.abs(right - cur))), float(np.max(np.abs(left - cur))))
        if d > worst:
            worst, worst_t = d, t
        cur = nxt
    return {"t_max": t_max, "max_defect": worst, "worst_t": worst_t}


@dataclass
class SamplerState:
    """Single-owner random source; equal seeds give equal paths."""

    seed: int
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)


def sample_paths(m: Measure, t: int, n: int, state: SamplerState) -> np.ndarray:
    if not m.samplable:
        raise LDShiftError(f"{type(m).__name__} is not samplable")
    return m.sample(t, n, state.rng)


def sample_path(m: Measure, t: int, state: SamplerState) -> Word:
    return Word(tuple(sample_paths(m, t, 1, state)[0].tolist()), m.alphabet)


def theta_lift(m: Measure, theta: Involution) -> ThetaLift:
    return ThetaLift(m, theta)


def absolute_continuity_violation(P: Measure, Phat: Measure, depth: int, budget=DEFAULT_BUDGET):
    """First word (shortest, then lexicographic) with ``P > 0 = Phat``, or ``None``."""
    for t in range(1, depth + 1):
        lp, lh = P.log_marginals(t, budget), Phat.log_marginals(t, budget)
        bad = np.nonzero(np.isfinite(lp) & np.isneginf(lh))[0]
        if bad.size:
            return Word(tuple(word_array(P.A, t)[bad[0]].tolist()), P.alphabet)
    return None


def build_product_pair(P: Measure, Phat: Measure, scan_depth: int = 4) -> tuple[ProductPair, ThetaLift]:
    """The pair measure ``P(u)Phat(v)`` and its image under ``(u, v) -> (v, u)``.

    Entropy production of this pair is ``sigma_t(u) - sigma_t(v)``.
    """
    if P.A != Phat.A:
        raise AlphabetMismatch("both measures must share an alphabet")
    bad = absolute_continuity_violation(P, Phat, scan_depth)
    if bad is not None:
        raise AbsoluteContinuityError(f"P({bad}) > 0 = Phat({bad})", bad)
    pair = ProductPair(P, Phat)
    return pair, ThetaLift(pair, pair.swap())
