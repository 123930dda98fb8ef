"""Alphabets, finite words, enumeration of Omega_t and the involutions theta_t.

Symbols are dense integer indices ``0 .. A-1``; labels only matter for
parsing and printing.  Lexicographic order of index sequences is the one
canonical order used whenever ties have to be broken.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import AlphabetMismatch, BudgetExceeded

DEFAULT_BUDGET = 2**24


@dataclass(frozen=True)
class Alphabet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("an alphabet needs at least two symbols")
        if len(set(labels)) != len(labels):
            raise ValueError(f"alphabet labels must be distinct: {labels}")
        if any(not lab or not lab.isprintable() or "," in lab for lab in labels):
            raise ValueError(f"labels must be non-empty printable strings without commas: {labels}")

    @classmethod
    def letters(cls, size: int) -> "Alphabet":
        """The alphabet ``a, b, c, ...`` of the given size (size <= 26)."""
        if not 2 <= size <= 26:
            raise ValueError("letters() supports 2 <= size <= 26")
        return cls(tuple(string.ascii_lowercase[:size]))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise AlphabetMismatch(f"unknown symbol {label!r} for alphabet {self.labels}") from None

    @property
    def single_char(self) -> bool:
        return all(len(lab) == 1 for lab in self.labels)

    def word(self, symbols: Iterable[int]) -> "Word":
        return Word(tuple(symbols), self)

    def empty(self) -> "Word":
        return Word((), self)

    def parse(self, text: str) -> "Word":
        """Parse a label string: no separator for single-character labels,
        comma-separated otherwise."""
        text = text.strip()
        if not text:
            return self.empty()
        if self.single_char:
            parts = list(text)
        else:
            parts = [p.strip() for p in text.split(",")]
        return Word(tuple(self.index(p) for p in parts), self)

    def format(self, word: Sequence[int]) -> str:
        labs = [self.labels[s] for s in word]
        return "".join(labs) if self.single_char else ",".join(labs)


@dataclass(frozen=True)
class Word:
    """An immutable finite word; ``Word((), A)`` is the empty word."""

    symbols: tuple[int, ...]
    alphabet: Alphabet

    def __post_init__(self):
        syms = tuple(int(s) for s in self.symbols)
        object.__setattr__(self, "symbols", syms)
        A = self.alphabet.size
        for s in syms:
            if not 0 <= s < A:
                raise AlphabetMismatch(f"symbol index {s} outside alphabet of size {A}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[int]:
        return iter(self.symbols)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Word(self.symbols[item], self.alphabet)
        return self.symbols[item]

    def __add__(self, other: "Word") -> "Word":
        return concat(self, other)

    def __lt__(self, other: "Word") -> bool:
        return self.symbols < other.symbols

    def __str__(self) -> str:
        return self.alphabet.format(self.symbols)

    def __repr__(self) -> str:
        return f"Word({str(self)!r})" if self.symbols else "Word(<empty>)"


def concat(u: Word, v: Word) -> Word:
    if u.alphabet != v.alphabet:
        raise AlphabetMismatch("cannot concatenate words over different alphabets")
    return Word(u.symbols + v.symbols, u.alphabet)


def check_budget(count: int, budget: int | None = DEFAULT_BUDGET) -> None:
    if budget is not None and count > budget:
        raise BudgetExceeded(f"enumeration of {count} words exceeds budget {budget}")


def enumerate_words(alphabet: Alphabet, t: int, budget: int | None = DEFAULT_BUDGET) -> list[Word]:
    """All ``A**t`` words of length ``t`` in lexicographic order."""
    if t < 0:
        raise ValueError("word length must be non-negative")
    check_budget(alphabet.size**t, budget)
    return [Word(s, alphabet) for s in itertools.product(range(alphabet.size), repeat=t)]


def iter_tuples(A: int, t: int, budget: int | None = DEFAULT_BUDGET) -> Iterator[tuple[int, ...]]:
    """Lexicographic iteration over raw index tuples (hot-loop variant)."""
    check_budget(A**t, budget)
    return itertools.product(range(A), repeat=t)


def word_array(A: int, t: int, budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
    """Omega_t as an integer array of shape ``(A**t, t)``, rows in lexicographic order."""
    check_budget(A**t, budget)
    if t == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(A**t, dtype=np.int64)
    powers = A ** np.arange(t - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % A


def words_up_to(A: int, t_min: int, t_max: int, budget: int | None = DEFAULT_BUDGET):
    """Raw tuples of every length ``t_min..t_max``, shortest first, each length lexicographic."""
    for t in range(t_min, t_max + 1):
        yield from iter_tuples(A, t, budget)


LETTERWISE = "letterwise"
REVERSAL = "reversal"


@dataclass(frozen=True)
class Involution:
    """theta_t acting letterwise or by reversal, composed with a letter involution."""

    kind: str
    letter_map: tuple[int, ...]

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in (LETTERWISE, REVERSAL):
            raise ValueError(f"involution kind must be {LETTERWISE!r} or {REVERSAL!r}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        m = tuple(int(x) for x in self.letter_map)
        object.__setattr__(self, "letter_map", m)
        if sorted(m) != list(range(len(m))):
            raise ValueError(f"letter map {m} is not a permutation")
        if any(m[m[i]] != i for i in range(len(m))):
            raise ValueError(f"letter map {m} is not an involution")

    @classmethod
    def reversal(cls, A: int, letter_map: Sequence[int] | None = None) -> "Involution":
        return cls(REVERSAL, tuple(range(A)) if letter_map is None else tuple(letter_map))

    @classmethod
    def letterwise(cls, letter_map: Sequence[int]) -> "Involution":
        return cls(LETTERWISE, tuple(letter_map))

    @property
    def size(self) -> int:
        return len(self.letter_map)

    def apply_tuple(self, w: Sequence[int]) -> tuple[int, ...]:
        m = self.letter_map
        if self.kind == REVERSAL:
            return tuple(m[s] for s in reversed(w))
        return tuple(m[s] for s in w)

    def apply_array(self, words: np.ndarray) -> np.ndarray:
        """Row-wise action on an array of words."""
        out = np.asarray(self.letter_map)[words]
        return out[:, ::-1] if self.kind == REVERSAL else out

    def permutation(self, t: int) -> np.ndarray:
        """Index permutation of the lexicographic enumeration of Omega_t induced by theta_t."""
        A = self.size
        arr = word_array(A, t)
        img = self.apply_array(arr)
        powers = A ** np.arange(t - 1, -1, -1, dtype=np.int64)
        return img @ powers if t else np.zeros(1, dtype=np.int64)


def theta_apply(theta: Involution, w: Word) -> Word:
    if theta.size != w.alphabet.size:
        raise AlphabetMismatch("involution and word use alphabets of different sizes")
    return Word(theta.apply_tuple(w.symbols), w.alphabet)
