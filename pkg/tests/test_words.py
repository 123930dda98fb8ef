import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldshift.errors import AlphabetMismatch, BudgetExceeded
from ldshift.words import (Alphabet, Involution, Word, concat, enumerate_words, theta_apply,
                           word_array)

AB = Alphabet.letters(2)


def w(text, alphabet=AB):
    return alphabet.parse(text)


def test_concat_examples():
    assert concat(AB.empty(), w("ab")) == w("ab")
    assert str(concat(w("a"), w("bb"))) == "abb"
    uv = w("ab") + w("ba")
    assert str(uv) == "abba" and len(uv) == 4


def test_concat_alphabet_mismatch():
    with pytest.raises(AlphabetMismatch):
        concat(w("a"), Alphabet.letters(3).parse("c"))


def test_enumeration_examples():
    assert enumerate_words(AB, 0) == [AB.empty()]
    assert [str(x) for x in enumerate_words(AB, 2)] == ["aa", "ab", "ba", "bb"]
    ws = enumerate_words(Alphabet.letters(3), 3)
    assert len(ws) == 27 and str(ws[0]) == "aaa" and str(ws[-1]) == "ccc"


def test_enumeration_budget():
    with pytest.raises(BudgetExceeded):
        enumerate_words(AB, 10, budget=100)
    with pytest.raises(BudgetExceeded):
        word_array(2, 25)


@pytest.mark.parametrize("A,t", [(2, 1), (2, 8), (3, 5), (3, 1)])
def test_word_array_matches_itertools(A, t):
    expected = np.array(list(itertools.product(range(A), repeat=t)))
    assert np.array_equal(word_array(A, t), expected)
    assert len({tuple(r) for r in expected}) == A**t


def test_theta_examples():
    rev = Involution.reversal(2)
    swap_rev = Involution.reversal(2, [1, 0])
    swap = Involution.letterwise([1, 0])
    assert str(theta_apply(rev, w("abb"))) == "bba"
    assert str(theta_apply(swap, w("ab"))) == "ba"
    assert str(theta_apply(swap_rev, w("aab"))) == "abb"


def test_involution_rejects_non_involution():
    with pytest.raises(ValueError):
        Involution.letterwise([1, 2, 0])


@pytest.mark.parametrize("theta", [Involution.reversal(3), Involution.reversal(3, [2, 1, 0]),
                                   Involution.letterwise([0, 2, 1])])
@pytest.mark.parametrize("t", range(0, 7))
def test_theta_permutation_is_involution(theta, t):
    perm = theta.permutation(t)
    assert np.array_equal(perm[perm], np.arange(3**t))
    if t:
        arr = word_array(3, t)
        for i in (0, len(arr) // 2, len(arr) - 1):
            assert tuple(arr[perm[i]]) == theta.apply_tuple(tuple(arr[i]))


def test_parse_and_format_multichar():
    alpha = Alphabet(("up", "down"))
    x = alpha.parse("up, down,down")
    assert x.symbols == (0, 1, 1) and str(x) == "up,down,down"
    assert alpha.parse("") == alpha.empty()


def test_word_slicing_and_order():
    x = w("abba")
    assert x[1:3] == w("bb") and x[0] == 0
    assert w("a") < w("ab") < w("b")


words = st.lists(st.integers(0, 2), max_size=6).map(lambda s: Word(tuple(s), Alphabet.letters(3)))


@given(words, words, words)
def test_concat_associative(u, v, x):
    assert concat(concat(u, v), x) == concat(u, concat(v, x))
    assert len(u + v) == len(u) + len(v)


@given(words, st.sampled_from([Involution.reversal(3), Involution.reversal(3, [1, 0, 2]),
                               Involution.letterwise([2, 1, 0])]))
def test_theta_twice_is_identity(x, theta):
    assert theta_apply(theta, theta_apply(theta, x)) == x
