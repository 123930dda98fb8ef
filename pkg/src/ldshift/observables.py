"""Finitely-dependent observables ``f: Omega_r -> R^d`` and their Birkhoff sums."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .words import word_array


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    """``table[i]`` is ``f`` at the ``i``-th word of Omega_r in lexicographic order."""

    A: int
    r: int
    table: np.ndarray

    def __post_init__(self):
        tab = np.asarray(self.table, dtype=float)
        if tab.ndim == 1:
            tab = tab[:, None]
        if self.r < 1:
            raise ValueError("locality r must be at least 1")
        if tab.shape[0] != self.A**self.r:
            raise ValueError(f"table needs {self.A ** self.r} rows, got {tab.shape[0]}")
        if not np.all(np.isfinite(tab)):
            raise ValueError("observable values must be finite")
        object.__setattr__(self, "table", tab)

    @property
    def d(self) -> int:
        return self.table.shape[1]

    @property
    def norm(self) -> float:
        """Sup norm ``max_w |f(w)|`` (Euclidean in R^d)."""
        return float(np.max(np.linalg.norm(self.table, axis=1)))

    @classmethod
    def indicator(cls, A: int, symbol: int) -> "ObservableSpec":
        tab = np.zeros(A)
        tab[symbol] = 1.0
        return cls(A, 1, tab)

    @classmethod
    def constant(cls, A: int, c: float, r: int = 1) -> "ObservableSpec":
        return cls(A, r, np.full(A**r, float(c)))

    @classmethod
    def from_function(cls, A: int, r: int, fn: Callable) -> "ObservableSpec":
        words = word_array(A, r)
        return cls(A, r, np.array([np.atleast_1d(fn(tuple(w))) for w in words], dtype=float))

    def window_index(self, words: np.ndarray) -> np.ndarray:
        """Index into ``table`` of every length-r window; shape ``(n, t-r+1)``."""
        n, t = words.shape
        powers = self.A ** np.arange(self.r - 1, -1, -1)
        k = t - self.r + 1
        if k <= 0:
            return np.zeros((n, 0), dtype=np.int64)
        idx = np.zeros((n, k), dtype=np.int64)
        for j, p in enumerate(powers):
            idx += words[:, j:j + k] * p
        return idx

    def birkhoff(self, words: np.ndarray) -> np.ndarray:
        """``S_{t-r+1} f`` for every row; shape ``(n, d)``."""
        idx = self.window_index(words)
        return self.table[idx].sum(axis=1)
