"""Containers for pressure curves and rate functions, plus CSV float formatting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def fmt(x) -> str:
    """Round-trippable float text; ``inf``/``-inf``/``nan`` spelled out; integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def midpoint_convexity_defect(x: np.ndarray, y: np.ndarray) -> float:
    """Largest violation of ``y_i <= linear interpolation of neighbours``
    on consecutive finite triples (0 for a convex sample)."""
    worst = 0.0
    for i in range(1, len(x) - 1):
        a, b, c = y[i - 1], y[i], y[i + 1]
        if not (np.isfinite(a) and np.isfinite(b) and np.isfinite(c)):
            continue
        lam = (x[i + 1] - x[i]) / (x[i + 1] - x[i - 1])
        worst = max(worst, b - (lam * a + (1 - lam) * c))
    return float(worst)


@dataclass
class PressureCurve:
    """Pressure values on a sorted scalar grid.

    ``t`` is the horizon of a finite-t curve; exact renewal curves carry
    ``t=None`` and ``exact=True``.
    """

    alphas: np.ndarray
    values: np.ndarray
    t: int | None = None
    exact: bool = False
    provenance: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.alphas.shape != self.values.shape:
            raise ValueError("alphas and values must have the same shape")
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alpha grid must be strictly increasing")
        if not self.provenance:
            tag = "exact" if self.exact else f"finite-t={self.t}"
            self.provenance = (tag,) * len(self.alphas)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def convexity_defect(self) -> float:
        return midpoint_convexity_defect(self.alphas, self.values)

    def rows(self):
        return zip(self.alphas, self.values)


@dataclass
class RateFunction:
    s: np.ndarray
    I: np.ndarray
    dual: PressureCurve | None = None
    argmax: np.ndarray | None = None

    def convexity_defect(self) -> float:
        return midpoint_convexity_defect(self.s, self.I)

    def rows(self):
        return zip(self.s, self.I)
