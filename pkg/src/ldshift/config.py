"""INI run configuration: measures, involution, observable, renewal pair and sweep.

Example::

    [measure]
    kind = markov
    P = 0.9, 0.1; 0.5, 0.5

    [hat_measure]
    kind = theta          # Theta-lift of [measure] under [involution]

    [involution]
    kind = reversal

    [sweep]
    alpha_min = -1
    alpha_max = 1
    alpha_step = 0.1
    t = 8

Matrices are rows separated by ``;``; matrix lists (``M`` for matrix
products) are separated by ``|``.  Gamma sequences are sums of terms
``coef*kind[:param]`` with kinds ``const, lin, pow, log1p, exp``, for
instance ``1*lin + 0.5*pow:2``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gamma import KINDS, GammaSpec
from .measures import Bernoulli, HiddenRenewal, Markov, MatrixProduct, Measure, ThetaLift, Uniform
from .observables import ObservableSpec
from .renewal import RenewalPair, preset
from .words import Alphabet, Involution

MEASURE_KEYS = {"kind", "p", "a", "p_matrix", "pi", "m", "gamma", "labels"}
# keys are case-insensitive: ``P`` is the Markov matrix, ``p`` the Bernoulli vector
SECTIONS = {
    "measure": MEASURE_KEYS,
    "hat_measure": MEASURE_KEYS,
    "q_measure": MEASURE_KEYS,
    "involution": {"kind", "map"},
    "observable": {"kind", "symbol", "value", "r", "table"},
    "hmc": {"preset", "gamma", "gamma_hat", "rel_tol", "max_terms", "boundary_tol"},
    "sweep": {"alpha_min", "alpha_max", "alpha_step", "t", "t_max", "tau", "v_max", "n", "seed",
              "samples", "threads", "tol", "interval", "kind", "t_list"},
    "output": {"csv", "json"},
}

DEFAULTS = {
    "alpha_min": -1.0, "alpha_max": 1.0, "alpha_step": 0.1, "t": 8, "t_max": 8, "tau": 0,
    "v_max": 4, "n": 2, "seed": 0, "samples": 100_000, "threads": None, "tol": None,
    "interval": None, "kind": "sld", "t_list": None,
}


@dataclass
class RunConfig:
    measure: Measure | None = None
    hat_measure: Measure | None = None
    q_measure: Measure | None = None
    involution: Involution | None = None
    observable: ObservableSpec | None = None
    hmc: RenewalPair | None = None
    sweep: dict = field(default_factory=lambda: dict(DEFAULTS))
    output: dict = field(default_factory=dict)

    def require(self, *names: str) -> None:
        for n in names:
            if getattr(self, n) is None:
                raise ConfigError(f"section [{n}] is required for this command")

    def alpha_grid(self) -> np.ndarray:
        s = self.sweep
        lo, hi, step = float(s["alpha_min"]), float(s["alpha_max"]), float(s["alpha_step"])
        if step <= 0:
            raise ConfigError("alpha_step must be positive")
        if lo > hi:
            raise ConfigError("alpha_min must not exceed alpha_max")
        n = int(round((hi - lo) / step))
        grid = lo + step * np.arange(n + 1)
        return np.round(grid, 12)


def _lines(text: str) -> dict:
    """``(section, key) -> line number`` for error reporting."""
    where, sec = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            sec = m.group(1).strip().lower()
            where[(sec, None)] = i
        elif "=" in line and sec is not None:
            where[(sec, line.split("=", 1)[0].strip().lower())] = i
    return where


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _matrix(s: str) -> np.ndarray:
    return np.array([_floats(r) for r in s.split(";") if r.strip()])


def parse_gamma(s: str) -> GammaSpec:
    """``"1*lin + 0.5*pow:2"`` -> GammaSpec; a bare kind has coefficient 1."""
    terms = []
    for part in s.split("+"):
        part = part.strip()
        if not part:
            continue
        coef, _, body = part.rpartition("*")
        kind, _, param = body.partition(":")
        kind = kind.strip()
        if kind not in KINDS:
            raise ValueError(f"unknown gamma term {body!r}; expected one of {KINDS}")
        c = float(coef) if coef else 1.0
        terms.append((kind, c, float(param)) if param else (kind, c))
    if not terms:
        raise ValueError("empty gamma expression")
    return GammaSpec.build(terms, label=s.strip())


def _measure(sec: dict, base: Measure | None, theta: Involution | None) -> Measure:
    kind = sec.get("kind", "").strip().lower()
    labels = tuple(sec["labels"].replace(",", " ").split()) if "labels" in sec else None
    alphabet = Alphabet(labels) if labels else None
    if kind == "bernoulli":
        return Bernoulli(tuple(_floats(sec["p"])), alphabet)
    if kind == "uniform":
        return Uniform(int(sec.get("a", 2)), alphabet)
    if kind == "markov":
        P = _matrix(sec.get("p_matrix", sec.get("p", "")))
        pi = np.array(_floats(sec["pi"])) if "pi" in sec else None
        return Markov(P, pi, alphabet)
    if kind == "matrix_product":
        return MatrixProduct([_matrix(b) for b in sec["m"].split("|")], alphabet=alphabet)
    if kind == "hidden_renewal":
        return HiddenRenewal(parse_gamma(sec["gamma"]))
    if kind == "theta":
        if base is None or theta is None:
            raise ValueError("kind = theta needs [measure] and [involution]")
        return ThetaLift(base, theta)
    raise ValueError(f"unknown measure kind {kind!r}")


def _involution(sec: dict, A: int) -> Involution:
    kind = sec.get("kind", "reversal").strip().lower()
    mp = [int(x) for x in _floats(sec["map"])] if "map" in sec else list(range(A))
    if kind == "reversal":
        return Involution.reversal(A, mp)
    if kind == "letterwise":
        return Involution.letterwise(mp)
    raise ValueError(f"unknown involution kind {kind!r}")


def _observable(sec: dict, A: int) -> ObservableSpec:
    kind = sec.get("kind", "indicator").strip().lower()
    r = int(sec.get("r", 1))
    if kind == "indicator":
        return ObservableSpec.indicator(A, int(sec.get("symbol", 0)))
    if kind == "constant":
        return ObservableSpec.constant(A, float(sec.get("value", 1.0)), r)
    if kind == "table":
        return ObservableSpec(A, r, np.array(_floats(sec["table"])))
    raise ValueError(f"unknown observable kind {kind!r}")


def _sweep_value(key: str, raw: str):
    if key in ("alpha_min", "alpha_max", "alpha_step", "tol"):
        return float(raw)
    if key == "interval":
        v = _floats(raw)
        if len(v) != 2:
            raise ValueError("interval needs two numbers")
        return tuple(v)
    if key == "t_list":
        return [int(x) for x in _floats(raw)]
    if key == "kind":
        return raw.strip().lower()
    return int(raw)


def parse_config(text: str) -> RunConfig:
    """Validate an INI document into a :class:`RunConfig`.

    Errors carry the offending line number; unknown sections and keys are errors.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"syntax error: {e.message.splitlines()[0]}", getattr(e, "lineno", None)) from None
    where = _lines(text)
    for sec in cp.sections():
        if sec.lower() not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", where.get((sec.lower(), None)))
        for key in cp[sec]:
            if key not in SECTIONS[sec.lower()]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", where.get((sec.lower(), key)))
    secs = {s.lower(): dict(cp[s]) for s in cp.sections()}
    cfg = RunConfig()

    def build(name, fn):
        try:
            return fn()
        except (ValueError, KeyError, IndexError) as e:
            msg = f"missing key {e}" if isinstance(e, KeyError) else str(e)
            raise ConfigError(f"[{name}]: {msg}", where.get((name, None))) from None

    if "measure" in secs:
        cfg.measure = build("measure", lambda: _measure(secs["measure"], None, None))
    if "involution" in secs:
        A = cfg.measure.A if cfg.measure is not None else 2
        cfg.involution = build("involution", lambda: _involution(secs["involution"], A))
    if "hat_measure" in secs:
        cfg.hat_measure = build("hat_measure", lambda: _measure(secs["hat_measure"], cfg.measure, cfg.involution))
    if "q_measure" in secs:
        cfg.q_measure = build("q_measure", lambda: _measure(secs["q_measure"], cfg.measure, cfg.involution))
    if "observable" in secs:
        A = cfg.measure.A if cfg.measure is not None else 2
        cfg.observable = build("observable", lambda: _observable(secs["observable"], A))
    if "hmc" in secs:
        cfg.hmc = build("hmc", lambda: _hmc(secs["hmc"]))
    for key, raw in secs.get("sweep", {}).items():
        cfg.sweep[key] = build("sweep", lambda: _sweep_value(key, raw))
    cfg.output = secs.get("output", {})
    try:
        cfg.alpha_grid()
    except ConfigError as e:
        raise ConfigError(str(e), where.get(("sweep", None))) from None
    return cfg


def _hmc(sec: dict) -> RenewalPair:
    tol = {k: (int(sec[k]) if k == "max_terms" else float(sec[k]))
           for k in ("rel_tol", "max_terms", "boundary_tol") if k in sec}
    if "preset" in sec:
        if "gamma" in sec or "gamma_hat" in sec:
            raise ValueError("give either preset or gamma/gamma_hat, not both")
        return preset(int(sec["preset"]), **tol)
    return RenewalPair(parse_gamma(sec["gamma"]), parse_gamma(sec["gamma_hat"]), name="custom", **tol)
