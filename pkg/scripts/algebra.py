#!/usr/bin/env python3
"""
Words and linear functionals on the tensor algebra.

A TensorFunctional is a finite real combination of words over the alphabet
{1..d}. Concatenation and the shuffle product are exact: single-word shuffles
are computed with integer multiplicities and only then scaled by the real
coefficients. Pairing a functional with a truncated signature reads the
tensor coordinate indexed by each word.
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DimensionMismatchError, InvalidParameterError, LevelShortfallError

logger = logging.getLogger(__name__)

Letters = Tuple[int, ...]


@dataclass(frozen=True)
class Word:
    """An immutable word; the empty tuple is the empty word."""

    letters: Letters = ()

    def __post_init__(self):
        letters = tuple(int(letter) for letter in self.letters)
        if any(letter < 1 for letter in letters):
            raise InvalidParameterError(f"word letters must be positive integers, got {letters}")
        object.__setattr__(self, 'letters', letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        if any(letter > 9 for letter in self.letters):
            return ','.join(str(letter) for letter in self.letters)
        return ''.join(str(letter) for letter in self.letters)

    def __repr__(self) -> str:
        return f"Word({str(self)!r})"

    def format(self, dimension: int) -> str:
        """Key for a word over {1..dimension}; alphabets past 9 letters always comma-join."""
        if dimension >= 10:
            return ','.join(str(letter) for letter in self.letters)
        return ''.join(str(letter) for letter in self.letters)

    @classmethod
    def parse(cls, text: str, dimension: Optional[int] = None) -> 'Word':
        """
        Inverse of str() and format(): "212" -> (2, 1, 2); "" -> empty word.
        With a dimension of 10 or more the text is always comma-separated, so
        "12" is the single letter 12 rather than the word (1, 2).
        """
        text = text.strip()
        if not text:
            return EMPTY_WORD
        if ',' in text or (dimension is not None and dimension >= 10):
            return cls(tuple(int(part) for part in text.split(',')))
        return cls(tuple(int(char) for char in text))

    def sort_key(self) -> Tuple[int, Letters]:
        """Graded-lexicographic key: length first, then letters."""
        return len(self.letters), self.letters

    def flat_index(self, dimension: int) -> int:
        """Row-major index of this word's coordinate inside its signature level."""
        index = 0
        for letter in self.letters:
            index = index * dimension + (letter - 1)
        return index


EMPTY_WORD = Word()

WordLike = Union[Word, str, Sequence[int]]


def _as_word(key: WordLike, dimension: Optional[int] = None) -> Word:
    if isinstance(key, Word):
        return key
    if isinstance(key, str):
        return Word.parse(key, dimension)
    return Word(tuple(key))


class TensorFunctional:
    """Finite linear combination of words; immutable, zero coefficients never stored."""

    __slots__ = ('_terms', 'dimension')

    def __init__(self, terms: Mapping[WordLike, float] = None, dimension: int = 2):
        if int(dimension) < 1:
            raise InvalidParameterError(f"dimension must be >= 1, got {dimension}")
        self.dimension = int(dimension)
        accumulated: Dict[Word, float] = {}
        for key, coefficient in (terms or {}).items():
            word = _as_word(key, self.dimension)
            if word.letters and max(word.letters) > self.dimension:
                raise InvalidParameterError(
                    f"word {word} uses a letter outside the alphabet 1..{self.dimension}")
            accumulated[word] = accumulated.get(word, 0.0) + float(coefficient)
        self._terms = {word: c for word, c in accumulated.items() if c != 0.0}

    @classmethod
    def _trusted(cls, terms: Dict[Word, float], dimension: int) -> 'TensorFunctional':
        functional = cls.__new__(cls)
        functional.dimension = dimension
        functional._terms = {word: c for word, c in terms.items() if c != 0.0}
        return functional

    @classmethod
    def zero(cls, dimension: int = 2) -> 'TensorFunctional':
        return cls({}, dimension)

    @classmethod
    def unit(cls, dimension: int = 2) -> 'TensorFunctional':
        """The empty word, which pairs to 1 with every signature."""
        return cls({EMPTY_WORD: 1.0}, dimension)

    @classmethod
    def word(cls, word: WordLike, dimension: int = 2, coefficient: float = 1.0) -> 'TensorFunctional':
        return cls({_as_word(word, dimension): coefficient}, dimension)

    @property
    def terms(self) -> Mapping[Word, float]:
        return MappingProxyType(self._terms)

    @property
    def degree(self) -> int:
        """Longest word with non-zero coefficient; -1 for the zero functional."""
        return max((len(word) for word in self._terms), default=-1)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, word: WordLike) -> float:
        return self._terms.get(_as_word(word, self.dimension), 0.0)

    def words(self) -> List[Word]:
        return sorted(self._terms, key=Word.sort_key)

    def items(self) -> List[Tuple[Word, float]]:
        return [(word, self._terms[word]) for word in self.words()]

    def _check_dimension(self, other: 'TensorFunctional'):
        if not isinstance(other, TensorFunctional):
            raise TypeError(f"expected TensorFunctional, got {type(other).__name__}")
        if other.dimension != self.dimension:
            raise DimensionMismatchError(
                f"functionals over dimensions {self.dimension} and {other.dimension}")

    def __add__(self, other: 'TensorFunctional') -> 'TensorFunctional':
        self._check_dimension(other)
        terms = dict(self._terms)
        for word, c in other._terms.items():
            terms[word] = terms.get(word, 0.0) + c
        return TensorFunctional._trusted(terms, self.dimension)

    def __sub__(self, other: 'TensorFunctional') -> 'TensorFunctional':
        return self + (-1.0) * other

    def __neg__(self) -> 'TensorFunctional':
        return (-1.0) * self

    def __mul__(self, scalar: float) -> 'TensorFunctional':
        if isinstance(scalar, TensorFunctional):
            raise TypeError("use concat() or shuffle() to multiply functionals")
        scalar = float(scalar)
        return TensorFunctional._trusted(
            {word: scalar * c for word, c in self._terms.items()}, self.dimension)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorFunctional):
            return NotImplemented
        return self.dimension == other.dimension and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self.dimension, frozenset(self._terms.items())))

    def __repr__(self) -> str:
        if not self._terms:
            return 'TensorFunctional(0)'
        parts = [f"{c:g}*[{word}]" for word, c in self.items()]
        return f"TensorFunctional({' + '.join(parts)})"

    def to_dict(self) -> Dict[str, float]:
        """JSON word map in graded-lex order: {"": c, "1": c, "21": c, ...}; comma-joined when d >= 10."""
        return {word.format(self.dimension): c for word, c in self.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, float], dimension: int = 2) -> 'TensorFunctional':
        return cls({Word.parse(key, dimension): value for key, value in data.items()}, dimension)

    def to_dense(self, level: int) -> List[np.ndarray]:
        """Coefficients laid out like signature levels, for vectorised pairing."""
        if self.degree > level:
            raise LevelShortfallError(
                f"functional of degree {self.degree} does not fit in level {level}",
                required=self.degree, available=level)
        dense = [np.zeros(self.dimension ** k) for k in range(level + 1)]
        for word, c in self._terms.items():
            dense[len(word)][word.flat_index(self.dimension)] = c
        return dense


@lru_cache(maxsize=1 << 18)
def _shuffle_letters(u: Letters, v: Letters) -> Tuple[Tuple[Letters, int], ...]:
    # ua ⧢ vb = (u ⧢ vb)a + (ua ⧢ v)b, with the empty word as unit
    if not u:
        return ((v, 1),)
    if not v:
        return ((u, 1),)
    out: Counter = Counter()
    for w, n in _shuffle_letters(u[:-1], v):
        out[w + (u[-1],)] += n
    for w, n in _shuffle_letters(u, v[:-1]):
        out[w + (v[-1],)] += n
    return tuple(out.items())


def shuffle_words(u: WordLike, v: WordLike) -> Dict[Word, int]:
    """Integer multiplicities of the shuffle of two single words."""
    return {Word(w): n for w, n in _shuffle_letters(_as_word(u).letters, _as_word(v).letters)}


def concat(f: TensorFunctional, g: TensorFunctional) -> TensorFunctional:
    """Bilinear extension of word concatenation."""
    f._check_dimension(g)
    terms: Dict[Word, float] = {}
    for u, cu in f._terms.items():
        for v, cv in g._terms.items():
            w = Word(u.letters + v.letters)
            terms[w] = terms.get(w, 0.0) + cu * cv
    return TensorFunctional._trusted(terms, f.dimension)


def shuffle(f: TensorFunctional, g: TensorFunctional) -> TensorFunctional:
    """Bilinear shuffle product."""
    f._check_dimension(g)
    terms: Dict[Letters, float] = {}
    for u, cu in f._terms.items():
        for v, cv in g._terms.items():
            scale = cu * cv
            for w, n in _shuffle_letters(u.letters, v.letters):
                terms[w] = terms.get(w, 0.0) + n * scale
    return TensorFunctional._trusted({Word(w): c for w, c in terms.items()}, f.dimension)


def shuffle_power(f: TensorFunctional, k: int) -> TensorFunctional:
    if k < 0:
        raise InvalidParameterError(f"shuffle power must be >= 0, got {k}")
    result = TensorFunctional.unit(f.dimension)
    for _ in range(k):
        result = shuffle(result, f)
    return result


def shuffle_poly(coeffs: Sequence[float], f: TensorFunctional) -> TensorFunctional:
    """a0·∅ + a1·f + a2·f^⧢2 + ... evaluated by Horner's rule in the shuffle algebra."""
    if len(coeffs) == 0:
        raise InvalidParameterError("shuffle polynomial needs at least one coefficient")
    result = TensorFunctional.zero(f.dimension)
    unit = TensorFunctional.unit(f.dimension)
    for a in reversed(list(coeffs)):
        result = shuffle(result, f) + float(a) * unit
    return result


def pair(f: TensorFunctional, signature) -> float:
    """<f, S> for any truncated signature exposing dimension, level and levels."""
    if f.dimension != signature.dimension:
        raise DimensionMismatchError(
            f"functional over dimension {f.dimension} paired with signature over {signature.dimension}")
    if f.degree > signature.level:
        raise LevelShortfallError(
            f"functional of degree {f.degree} exceeds signature level {signature.level}",
            required=f.degree, available=signature.level)
    d = f.dimension
    return float(sum(c * signature.levels[len(word)][word.flat_index(d)]
                     for word, c in f._terms.items()))


def words_up_to(dimension: int, max_length: int) -> List[Word]:
    """All words of length <= max_length in graded-lex order."""
    return [Word(letters)
            for length in range(max_length + 1)
            for letters in itertools.product(range(1, dimension + 1), repeat=length)]


def from_coefficients(basis: Sequence[Word], values: Iterable[float], dimension: int = 2) -> TensorFunctional:
    return TensorFunctional(dict(zip(basis, values)), dimension)


def to_coefficients(f: TensorFunctional, basis: Sequence[Word]) -> np.ndarray:
    missing = set(f.terms) - set(basis)
    if missing:
        raise InvalidParameterError(
            f"functional has words outside the basis: {sorted(str(w) for w in missing)}")
    return np.array([f.coefficient(word) for word in basis])
