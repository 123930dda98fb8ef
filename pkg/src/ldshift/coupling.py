"""The gluing map psi_{n,t} from N blocks of length n to words of length t.

Blocks ``w^1 .. w^N`` are glued right to left, each junction receiving the
insert ``|xi| <= tau`` that best preserves probability; a left extension
``b`` pads the result to length exactly ``t``.  Certificates enumerate
Omega_{t'} and compare the block-product measure pushed forward by psi with
the true marginal.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from .decoupling import DecouplingSpec, _as_list, extend_word, verify_sld, verify_ssd
from .errors import AbsoluteContinuityError, BudgetExceeded, CheckFailure, LDShiftError
from .measures import Measure
from .observables import ObservableSpec
from .words import DEFAULT_BUDGET, Word, word_array


class SupportError(LDShiftError, ValueError):
    """A block of the input word has zero mass."""


@dataclass(frozen=True)
class BlockLayout:
    n: int
    t: int
    tau: int
    N: int
    t_prime: int
    delta_min: int
    delta_max: int

    @property
    def degenerate(self) -> bool:
        return self.N == 0


def block_counts(n: int, t: int, tau_n: int) -> BlockLayout:
    """``N = 2 floor(t / (2(n + tau)))`` blocks, ``t' = N n``."""
    if n < 1:
        raise ValueError("block length must be at least 1")
    if tau_n < 0:
        raise ValueError("tau must be non-negative")
    if t < n:
        raise ValueError(f"t={t} is shorter than the block length n={n}")
    N = 2 * (t // (2 * (n + tau_n)))
    tp = N * n
    return BlockLayout(n, t, tau_n, N, tp, t - N * (n + tau_n), t - tp)


@dataclass
class PsiWord:
    word: tuple[int, ...]
    inserts: list[tuple[int, ...]]
    prefix: tuple[int, ...]

    @property
    def delta(self) -> int:
        return len(self.prefix)


def _score(ms: list[Measure], head, s, cand: np.ndarray) -> np.ndarray:
    if len(ms) == 1:
        return ms[0].log_marginals_of(cand)
    dev = []
    for m in ms:
        base = m.log_prob(head) + m.log_prob(s)
        with np.errstate(invalid="ignore"):
            d = np.abs(m.log_marginals_of(cand) - base)
        dev.append(np.where(np.isnan(d), math.inf, d))
    return -np.max(np.stack(dev), axis=0)


def psi_details(measures, layout: BlockLayout, w) -> PsiWord:
    ms = _as_list(measures)
    A = ms[0].A
    if layout.degenerate:
        raise ValueError("degenerate layout (N = 0) has no gluing map")
    syms = tuple(w.symbols) if isinstance(w, Word) else tuple(int(x) for x in w)
    n, N = layout.n, layout.N
    if len(syms) != layout.t_prime:
        raise ValueError(f"input must have length t' = {layout.t_prime}")
    blocks = [syms[k * n:(k + 1) * n] for k in range(N)]
    for k, blk in enumerate(blocks):
        for m in ms:
            if m.log_prob(blk) == -math.inf:
                raise SupportError(f"block {k + 1} ({ms[0].alphabet.format(blk)}) has zero mass")
    s = blocks[-1]
    inserts: list[tuple[int, ...]] = []
    for i in range(N - 2, -1, -1):
        head = blocks[i]
        best, best_xi = -math.inf, None
        for k in range(layout.tau + 1):
            xis = word_array(A, k)
            cand = np.concatenate([np.tile(head, (len(xis), 1)), xis, np.tile(s, (len(xis), 1))], axis=1)
            sc = _score(ms, head, s, cand)
            j = int(np.argmax(sc))
            xi = tuple(xis[j].tolist())
            if sc[j] > best or (sc[j] == best and sc[j] > -math.inf and xi < best_xi):
                best, best_xi = float(sc[j]), xi
        if best_xi is None:
            fmt = ms[0].alphabet.format
            raise CheckFailure(f"no positive-probability gluing for ({fmt(head)}, {fmt(s)})")
        inserts.insert(0, best_xi)
        s = head + best_xi + s
    delta = layout.t - layout.t_prime - sum(len(x) for x in inserts)
    b, _ = extend_word(ms, s, delta)
    return PsiWord(b.symbols + s, inserts, b.symbols)


def build_psi(measures, layout: BlockLayout, w) -> Word:
    ms = _as_list(measures)
    return Word(psi_details(ms, layout, w).word, ms[0].alphabet)


@dataclass
class PsiDiagnostics:
    n: int
    t: int
    N: int
    t_prime: int
    delta: int
    g_min: float
    g_analytic: float
    multiplicity: int
    sigma_defect: float | None = None
    birkhoff_defect: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _support_words(ms, layout, budget):
    A = ms[0].A
    tp = layout.t_prime
    if budget is not None and A**tp > budget:
        raise BudgetExceeded(f"A^{tp} exceeds budget {budget}")
    words = word_array(A, tp)
    n = layout.n
    block_logs = []
    ok = np.ones(len(words), dtype=bool)
    for m in ms:
        lb = np.zeros(len(words))
        for k in range(layout.N):
            part = m.log_marginals_of(words[:, k * n:(k + 1) * n])
            lb = lb + part
        ok &= np.isfinite(lb)
        block_logs.append(lb)
    return words[ok], [lb[ok] for lb in block_logs]


def analytic_bound(measures, layout: BlockLayout, budget: int | None = DEFAULT_BUDGET) -> float:
    """``(N-1) c_n + (t - t') C + (N-1) log(tau+1)`` with constants from exact certificates."""
    ms = _as_list(measures)
    n, t, tau, N = layout.n, layout.t, layout.tau, layout.N
    if N == 0:
        return math.nan
    spec = DecouplingSpec("SLD" if len(ms) == 1 else "SSD", tau, max(1, t - n))
    if len(ms) == 1:
        c_n = verify_sld(ms[0], n, spec, budget=budget).c_star if N > 1 else 0.0
        C = math.log(ms[0].A)
    else:
        c_n = verify_ssd(ms[0], ms[1], n, spec, budget=budget).c_star if N > 1 else 0.0
        c_1 = verify_ssd(ms[0], ms[1], 1, DecouplingSpec("SSD", tau, max(1, t - 1)), budget=budget).c_star
        p1 = np.exp(np.minimum(ms[0].log_marginals(1), ms[1].log_marginals(1)))
        C = c_1 - math.log(float(p1.max()))
    return (N - 1) * c_n + (t - layout.t_prime) * C + (N - 1) * math.log(tau + 1)


def psi_certificate(measures, layout: BlockLayout, f: ObservableSpec | None = None,
                    budget: int | None = DEFAULT_BUDGET) -> PsiDiagnostics:
    """Minimal ``g`` with ``P^(n) o psi^{-1} <= e^g P_t`` plus preimage multiplicity.

    The block-product measure is taken from the first measure.  With two
    measures the entropy-production defect is reported too; with ``f`` the
    Birkhoff-sum defect.
    """
    ms = _as_list(measures)
    if layout.degenerate:
        return PsiDiagnostics(layout.n, layout.t, 0, 0, layout.t, math.nan, math.nan, 0)
    words, block_logs = _support_words(ms, layout, budget)
    pushed = defaultdict(list)
    deltas = set()
    for w, lm in zip(words, block_logs[0]):
        d = psi_details(ms, layout, w)
        pushed[d.word].append(float(lm))
        deltas.add(d.delta)
    m = ms[0]
    g_min = -math.inf
    mult = 0
    for y, masses in pushed.items():
        g_min = max(g_min, float(logsumexp(masses)) - m.log_prob(y))
        mult = max(mult, len(masses))
    bound_mult = (layout.tau + 1) ** (layout.N - 1)
    if mult > bound_mult:
        raise CheckFailure(f"psi is {mult}-to-one, above the bound {bound_mult}")
    diag = PsiDiagnostics(layout.n, layout.t, layout.N, layout.t_prime,
                          max(deltas) if deltas else layout.delta_max, g_min,
                          analytic_bound(ms, layout, budget), mult)
    if len(ms) == 2:
        diag.sigma_defect = compat_defect(ms, layout, "sigma", budget=budget)
    if f is not None:
        diag.birkhoff_defect = compat_defect(ms, layout, "birkhoff", f=f, budget=budget)["defect"]
    return diag


def compat_defect(measures, layout: BlockLayout, mode: str = "sigma", f: ObservableSpec | None = None,
                  budget: int | None = DEFAULT_BUDGET):
    """``sup_w |z_t(psi(w)) - sum_k z_n(w^k)| / t`` over the block support.

    ``mode="sigma"`` uses ``z = log P - log Phat`` (two measures) and returns
    a float; ``mode="birkhoff"`` uses ``z = S_{t-r+1} f`` and returns a dict
    with the defect and the bound ``|f| (1 - t'/t + r/n)``.
    """
    ms = _as_list(measures)
    if layout.degenerate:
        raise ValueError("degenerate layout")
    words, _ = _support_words(ms, layout, budget)
    n, t = layout.n, layout.t
    images = np.array([psi_details(ms, layout, w).word for w in words], dtype=np.int64)
    if mode == "sigma":
        if len(ms) != 2:
            raise ValueError("sigma mode needs two measures")
        P, Ph = ms

        def z(arr):
            lp, lh = P.log_marginals_of(arr), Ph.log_marginals_of(arr)
            bad = np.isfinite(lp) & np.isneginf(lh)
            if bad.any():
                raise AbsoluteContinuityError("P > 0 = Phat on a visited word")
            return lp - lh

        whole = z(images)
        parts = sum(z(words[:, k * n:(k + 1) * n]) for k in range(layout.N))
        return float(np.max(np.abs(whole - parts))) / t
    if mode == "birkhoff":
        if f is None:
            raise ValueError("birkhoff mode needs an observable")
        whole = f.birkhoff(images)
        parts = sum(f.birkhoff(words[:, k * n:(k + 1) * n]) for k in range(layout.N))
        defect = float(np.max(np.linalg.norm(whole - parts, axis=1))) / t
        bound = f.norm * (1 - layout.t_prime / t + f.r / n)
        return {"defect": defect, "bound": bound, "ok": defect <= bound + 1e-12}
    raise ValueError(f"unknown mode {mode!r}")
