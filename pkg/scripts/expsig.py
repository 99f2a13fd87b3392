#!/usr/bin/env python3
"""
Expected signatures of midprice batches.

Monte Carlo and empirical estimates are the same computation: the mean of
the augmented-path signatures in a PathBatch. Paths are processed in blocks
whose size depends only on the signature shape; block results are reduced
in block order so the estimate does not depend on the number of threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from algebra import TensorFunctional, words_up_to
from errors import InvalidParameterError
from market import PathBatch
from signature import (TruncatedSignature, batch_signatures, check_level_budget,
                       stream_batch_signatures, tensor_product_levels)

logger = logging.getLogger(__name__)

AUGMENTED_DIMENSION = 2


def signature_block_size(dimension: int, level: int) -> int:
    """Paths per block; a function of the signature shape only."""
    coefficients = sum(dimension ** k for k in range(level + 1))
    return max(1, min(4096, 2 ** 22 // coefficients))


class ExpectedSignature(TruncatedSignature):
    """Coefficient-wise mean of signatures with its Monte Carlo standard errors."""

    def __init__(self, levels: Sequence[np.ndarray], dimension: int, n_samples: int,
                 standard_errors: Optional[Sequence[np.ndarray]] = None,
                 initial_price: Optional[float] = 1.0):
        super().__init__(levels, dimension)
        if int(n_samples) < 1:
            raise InvalidParameterError(f"n_samples must be >= 1, got {n_samples}")
        self.n_samples = int(n_samples)
        if standard_errors is None:
            standard_errors = [np.zeros_like(level) for level in self.levels]
        self.standard_errors: List[np.ndarray] = [np.asarray(se, dtype=float).reshape(-1)
                                                  for se in standard_errors]
        self.initial_price = initial_price

    def level_standard_errors(self) -> np.ndarray:
        """Largest coefficient standard error on each level."""
        return np.array([float(np.max(se)) if se.size else 0.0 for se in self.standard_errors])

    def standard_error(self, letters: Sequence[int]) -> float:
        index = 0
        for letter in letters:
            index = index * self.dimension + (int(letter) - 1)
        return float(self.standard_errors[len(letters)][index])

    def truncate(self, level: int) -> 'ExpectedSignature':
        base = super().truncate(level)
        return ExpectedSignature(base.levels, self.dimension, self.n_samples,
                                 self.standard_errors[:level + 1], self.initial_price)

    def to_json(self) -> Dict[str, Any]:
        terms = {}
        se_terms = {}
        for word in words_up_to(self.dimension, self.level):
            index = word.flat_index(self.dimension)
            terms[word] = float(self.levels[len(word)][index])
            se_terms[word] = float(self.standard_errors[len(word)][index])
        coefficients = TensorFunctional._trusted(terms, self.dimension)
        errors = TensorFunctional._trusted(se_terms, self.dimension)
        return {
            'dimension': self.dimension,
            'level': self.level,
            'n_samples': self.n_samples,
            'initial_price': self.initial_price,
            'level_norms': [float(x) for x in self.level_norms()],
            'level_standard_errors': [float(x) for x in self.level_standard_errors()],
            'coefficients': coefficients.to_dict(),
            'standard_errors': errors.to_dict(),
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'ExpectedSignature':
        try:
            dimension = int(data['dimension'])
            level = int(data['level'])
            levels = TensorFunctional.from_dict(data['coefficients'], dimension).to_dense(level)
            errors = TensorFunctional.from_dict(data.get('standard_errors', {}), dimension).to_dense(level)
            return cls(levels, dimension, int(data['n_samples']), errors, data.get('initial_price'))
        except KeyError as e:
            raise InvalidParameterError(f"expected-signature document is missing field {e}") from e

    def __repr__(self) -> str:
        return (f"ExpectedSignature(dimension={self.dimension}, level={self.level}, "
                f"n_samples={self.n_samples})")


def _block_moments(batch: PathBatch, rows: slice, level: int) -> Tuple[int, List[np.ndarray], List[np.ndarray]]:
    """Size, coefficient sums and centred sums of squares for one block."""
    levels = batch_signatures(batch.increments(rows), level)
    size = levels[0].shape[0]
    sums = [lv.sum(axis=0) for lv in levels]
    m2 = [((lv - s / size) ** 2).sum(axis=0) for lv, s in zip(levels, sums)]
    return size, sums, m2


def estimate(batch: PathBatch, level: int, threads: int = 1) -> ExpectedSignature:
    """Mean augmented-path signature of the batch, truncated at `level`."""
    if level < 1:
        raise InvalidParameterError(f"expected-signature level must be >= 1, got {level}")
    if batch.n_paths < 1:
        raise InvalidParameterError("cannot estimate an expected signature from an empty batch")
    check_level_budget(AUGMENTED_DIMENSION, level)

    block = signature_block_size(AUGMENTED_DIMENSION, level)
    blocks = [slice(start, min(start + block, batch.n_paths)) for start in range(0, batch.n_paths, block)]
    logger.debug(f"Estimating level-{level} expected signature of {batch.n_paths} paths "
                 f"in {len(blocks)} blocks of {block} (threads={threads})")

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda rows: _block_moments(batch, rows, level), blocks))

    # sums add in block order; centred moments merge pairwise
    count, sums, m2 = results[0]
    sums = [s.copy() for s in sums]
    m2 = [m.copy() for m in m2]
    for size, block_sums, block_m2 in results[1:]:
        for k in range(level + 1):
            delta = block_sums[k] / size - sums[k] / count
            m2[k] += block_m2[k] + delta ** 2 * (count * size / (count + size))
            sums[k] += block_sums[k]
        count += size

    means = [s / count for s in sums]
    means[0] = np.ones(1)
    if count > 1:
        errors = [np.sqrt(np.maximum(m, 0.0) / (count - 1)) / math.sqrt(count) for m in m2]
    else:
        errors = [np.zeros_like(m) for m in m2]
    errors[0] = np.zeros(1)

    es = ExpectedSignature(means, AUGMENTED_DIMENSION, count, errors, batch.initial_price)
    logger.info(f"Expected signature: N={level}, n={count}, "
                f"level norms={np.array2string(es.level_norms(), precision=3)}")
    return es


def stream_signatures(batch: PathBatch, level: int,
                      rows: Union[slice, np.ndarray] = slice(None)) -> Iterator[Tuple[int, List[np.ndarray]]]:
    """Yield (k, prefix signature levels at t_k) for the selected paths; arrays are reused."""
    for k, levels in enumerate(stream_batch_signatures(batch.increments(rows), level)):
        yield k, levels


def fawcett_bm_oracle(T: float, level: int, sigma: float = 1.0) -> ExpectedSignature:
    """
    Closed-form expected signature of (t, sigma W_t) on [0, T]:
    exp⊗(T e1 + sigma² T/2 e2⊗e2), the Stratonovich lift.
    """
    if not T > 0:
        raise InvalidParameterError(f"T must be > 0, got {T}")
    check_level_budget(AUGMENTED_DIMENSION, level)
    d = AUGMENTED_DIMENSION
    generator = [np.zeros(d ** k) for k in range(level + 1)]
    if level >= 1:
        generator[1][0] = T
    if level >= 2:
        generator[2][3] = 0.5 * sigma ** 2 * T
    total = [np.ones(1)] + [np.zeros(d ** k) for k in range(1, level + 1)]
    term = [lv.copy() for lv in total]
    for n in range(1, level + 1):
        term = [lv / n for lv in tensor_product_levels(term, generator)]
        total = [a + b for a, b in zip(total, term)]
    return ExpectedSignature(total, d, 1, initial_price=1.0)


def level_norms(es: TruncatedSignature) -> np.ndarray:
    """Euclidean norm of each level 0..N."""
    return es.level_norms()
