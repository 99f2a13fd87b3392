#!/usr/bin/env python3
"""
Truncated signatures of piecewise-linear paths.

Level k of a signature over R^d is stored densely as a flat array of d**k
coefficients in row-major word order (the coordinate of word i1...ik sits at
index sum (i_j - 1) d^(k-j)). A linear segment with increment delta has
signature exp(delta) truncated at level N; whole paths are folded together
with Chen's identity. The batched engine advances many paths one segment at
a time with the Horner form of S ⊗ exp(delta).
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from errors import DimensionMismatchError, InvalidParameterError, LevelBudgetError

logger = logging.getLogger(__name__)

MAX_LEVEL_COEFFICIENTS = 10 ** 8


def check_level_budget(dimension: int, level: int):
    if level < 0:
        raise InvalidParameterError(f"signature level must be >= 0, got {level}")
    if dimension ** level > MAX_LEVEL_COEFFICIENTS:
        raise LevelBudgetError(
            f"level {level} over dimension {dimension} needs {dimension ** level} coefficients "
            f"(budget {MAX_LEVEL_COEFFICIENTS})")


class TruncatedSignature:
    """Graded tensor coefficients up to level N; level 0 is exactly 1."""

    def __init__(self, levels: Sequence[np.ndarray], dimension: int):
        dimension = int(dimension)
        if dimension < 1:
            raise InvalidParameterError(f"dimension must be >= 1, got {dimension}")
        check_level_budget(dimension, len(levels) - 1)
        arrays = []
        for k, level in enumerate(levels):
            array = np.array(level, dtype=float).reshape(-1)
            if array.size != dimension ** k:
                raise DimensionMismatchError(
                    f"level {k} has {array.size} coefficients, expected {dimension ** k}")
            array.setflags(write=False)
            arrays.append(array)
        if not arrays or arrays[0][0] != 1.0:
            raise InvalidParameterError("level-0 coefficient of a signature must be exactly 1")
        self.dimension = dimension
        self.levels: List[np.ndarray] = arrays

    @property
    def level(self) -> int:
        return len(self.levels) - 1

    @classmethod
    def unit(cls, dimension: int, level: int) -> 'TruncatedSignature':
        check_level_budget(dimension, level)
        return cls([np.ones(1)] + [np.zeros(dimension ** k) for k in range(1, level + 1)], dimension)

    def coefficient(self, letters: Sequence[int]) -> float:
        index = 0
        for letter in letters:
            index = index * self.dimension + (int(letter) - 1)
        return float(self.levels[len(letters)][index])

    def tensor(self, k: int) -> np.ndarray:
        """Level k reshaped to a (d,)*k array."""
        return self.levels[k].reshape((self.dimension,) * k)

    def truncate(self, level: int) -> 'TruncatedSignature':
        if level > self.level:
            raise InvalidParameterError(f"cannot raise truncation from {self.level} to {level}")
        return TruncatedSignature(self.levels[:level + 1], self.dimension)

    def level_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(level) for level in self.levels])

    def __repr__(self) -> str:
        return f"TruncatedSignature(dimension={self.dimension}, level={self.level})"


@dataclass(frozen=True)
class SamplePath:
    """Grid t0 < ... < tm and samples of a d-dimensional path, linearly interpolated."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.size < 2:
            raise InvalidParameterError(f"a sample path needs at least 2 grid points, got {times.size}")
        if values.shape[0] != times.size:
            raise InvalidParameterError(
                f"{values.shape[0]} samples for a grid of {times.size} points")
        if np.any(np.diff(times) <= 0):
            raise InvalidParameterError("sample path times must be strictly increasing")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)

    @classmethod
    def augmented(cls, times: np.ndarray, prices: np.ndarray) -> 'SamplePath':
        """The time-augmented path (t, X_t); the first coordinate is the grid itself."""
        times = np.asarray(times, dtype=float)
        return cls(times, np.column_stack([times, np.asarray(prices, dtype=float)]))

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


def segment_signature(delta: Sequence[float], level: int) -> TruncatedSignature:
    """exp(delta) truncated at `level`: level k is delta^{⊗k}/k!."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    check_level_budget(delta.size, level)
    levels = [np.ones(1)]
    for k in range(1, level + 1):
        levels.append(np.multiply.outer(levels[-1], delta).reshape(-1) / k)
    return TruncatedSignature(levels, delta.size)


def tensor_product_levels(first: Sequence[np.ndarray], second: Sequence[np.ndarray]) -> List[np.ndarray]:
    """(a ⊗ b)_k = sum_i a_i ⊗ b_{k-i}, truncated at the common level."""
    top = min(len(first), len(second)) - 1
    levels = []
    for k in range(top + 1):
        level = np.multiply.outer(first[0], second[k]).reshape(-1)
        for i in range(1, k + 1):
            level = level + np.multiply.outer(first[i], second[k - i]).reshape(-1)
        levels.append(level)
    return levels


def chen_concat(first: TruncatedSignature, second: TruncatedSignature) -> TruncatedSignature:
    """Truncated tensor product: the signature of the concatenated path."""
    if first.dimension != second.dimension or first.level != second.level:
        raise DimensionMismatchError(
            f"cannot concatenate signatures (d={first.dimension}, N={first.level}) "
            f"and (d={second.dimension}, N={second.level})")
    return TruncatedSignature(tensor_product_levels(first.levels, second.levels), first.dimension)


def unit_levels(batch_size: int, dimension: int, level: int) -> List[np.ndarray]:
    check_level_budget(dimension, level)
    levels = [np.ones((batch_size, 1))]
    levels.extend(np.zeros((batch_size, dimension ** k)) for k in range(1, level + 1))
    return levels


def advance_levels(levels: List[np.ndarray], delta: np.ndarray):
    """In place: levels <- levels ⊗ exp(delta) for a batch of increments of shape (B, d)."""
    batch_size = delta.shape[0]
    top = len(levels) - 1
    for k in range(top, 0, -1):
        # S_k + (S_{k-1} + (... (S_1 + delta/k) ⊗ delta/(k-1) ...) ⊗ delta/2) ⊗ delta
        acc = delta / k
        for j in range(1, k):
            acc = ((levels[j] + acc)[:, :, None] * (delta[:, None, :] / (k - j))).reshape(batch_size, -1)
        levels[k] += acc


def batch_signatures(increments: np.ndarray, level: int) -> List[np.ndarray]:
    """Signatures of a batch of piecewise-linear paths given increments (B, m, d)."""
    batch_size, steps, dimension = increments.shape
    levels = unit_levels(batch_size, dimension, level)
    for step in range(steps):
        advance_levels(levels, increments[:, step, :])
    return levels


def stream_batch_signatures(increments: np.ndarray, level: int) -> Iterator[List[np.ndarray]]:
    """Yield the batched prefix signatures at grid points 0..m (the arrays are reused)."""
    batch_size, steps, dimension = increments.shape
    levels = unit_levels(batch_size, dimension, level)
    yield levels
    for step in range(steps):
        advance_levels(levels, increments[:, step, :])
        yield levels


def _signature_from_batch(levels: List[np.ndarray], row: int, dimension: int) -> TruncatedSignature:
    return TruncatedSignature([level[row].copy() for level in levels], dimension)


def path_signature(path: SamplePath, level: int) -> TruncatedSignature:
    """Exact signature of the piecewise-linear path over its whole grid."""
    levels = batch_signatures(path.increments()[None, :, :], level)
    return _signature_from_batch(levels, 0, path.dimension)


def prefix_signatures(path: SamplePath, level: int) -> List[TruncatedSignature]:
    """Signatures over [t0, tk] for every grid index k; element 0 is the unit."""
    return [_signature_from_batch(levels, 0, path.dimension)
            for levels in stream_batch_signatures(path.increments()[None, :, :], level)]


def pair_batch(dense: Sequence[np.ndarray], levels: Sequence[np.ndarray],
               out: Optional[np.ndarray] = None) -> np.ndarray:
    """<f, S_b> for every row b, with f given by TensorFunctional.to_dense."""
    result = np.zeros(levels[0].shape[0]) if out is None else out
    result[:] = 0.0
    for coefficients, level in zip(dense, levels):
        if np.any(coefficients):
            result += level @ coefficients
    return result
