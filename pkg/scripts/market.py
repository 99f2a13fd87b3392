#!/usr/bin/env python3
"""
Midprice paths for the execution problem.

Four simulators (Brownian, OU trading signal, order flow with jump-decay
order rates, fractional Brownian motion) generate X on a uniform Euler grid
and store the price coordinate as 1 + X so every path starts at 1. Market
data windows are loaded from CSV and normalised by their first price.
Every batch is consumed as the time-augmented path (t, price).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from errors import DataFormatError, InvalidParameterError
from signature import SamplePath

logger = logging.getLogger(__name__)

MODELS = ('bm', 'ou_signal', 'order_flow', 'fbm')
MARK_CONVENTIONS = ('rate', 'mean')
CSV_COLUMNS = ['window_id', 't', 'price']

# paths per simulation block handed to a worker
SIMULATION_BLOCK = 1024


@dataclass(frozen=True)
class ModelParams:
    """Simulator parameters; fields that a model does not use are ignored."""

    model: str = 'bm'
    sigma: float = 0.02
    T: float = 1.0
    steps: int = 500
    # ou_signal
    I0: float = 0.0
    gamma: float = 0.1
    sigma0: float = 0.02
    # order_flow
    k_flow: float = 1e-4
    kappa: float = 5.0
    lambda0: float = 5.0
    eta0: float = 0.8
    mu0: float = 0.0
    mark_convention: str = 'rate'
    # fbm
    H: float = 0.5
    antithetic: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidParameterError(f"unknown model '{self.model}', expected one of {MODELS}")
        if not self.sigma > 0:
            raise InvalidParameterError(f"sigma must be > 0, got {self.sigma}")
        if not self.T > 0:
            raise InvalidParameterError(f"T must be > 0, got {self.T}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidParameterError(f"steps must be an integer >= 2, got {self.steps}")
        if self.model == 'ou_signal':
            self._require_positive('gamma', 'sigma0')
        if self.model == 'order_flow':
            self._require_positive('kappa', 'lambda0', 'eta0')
            if self.mu0 < 0:
                raise InvalidParameterError(f"mu0 must be >= 0, got {self.mu0}")
            if self.mark_convention not in MARK_CONVENTIONS:
                raise InvalidParameterError(
                    f"mark_convention must be one of {MARK_CONVENTIONS}, got '{self.mark_convention}'")
        if self.model == 'fbm' and not 0.25 <= self.H < 1.0:
            raise InvalidParameterError(f"Hurst parameter must lie in [0.25, 1), got {self.H}")
        if self.antithetic and self.model not in ('bm', 'fbm'):
            raise InvalidParameterError(f"antithetic sampling is only available for bm and fbm, not {self.model}")

    def _require_positive(self, *names: str):
        for name in names:
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0 for model {self.model}, got {getattr(self, name)}")

    @property
    def mark_scale(self) -> float:
        """Mean of one order-flow mark."""
        rate = self.eta0 * self.kappa
        return 1.0 / rate if self.mark_convention == 'rate' else rate

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, int(self.steps) + 1)


@dataclass
class PathBatch:
    """Paths on one common grid; values[i] is the price coordinate of path i."""

    times: np.ndarray
    values: np.ndarray
    seed: Optional[int] = None
    path_seeds: Tuple[Tuple[int, ...], ...] = ()
    window_ids: Optional[List[str]] = None
    factors: Dict[str, np.ndarray] = field(default_factory=dict)
    params: Optional[ModelParams] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.times.size:
            raise InvalidParameterError(
                f"batch values have {self.values.shape[1]} columns for a grid of {self.times.size} points")
        if self.times.size < 2 or np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("batch grid must have >= 2 strictly increasing points")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def initial_price(self) -> Optional[float]:
        """Common starting price of every path, or None when they differ."""
        first = self.values[:, 0]
        return float(first[0]) if np.all(first == first[0]) else None

    def path(self, index: int) -> SamplePath:
        return SamplePath.augmented(self.times, self.values[index])

    def paths(self) -> List[SamplePath]:
        return [self.path(i) for i in range(self.n_paths)]

    def increments(self, rows: Union[slice, np.ndarray] = slice(None)) -> np.ndarray:
        """Increments of the augmented paths, shape (B, steps, 2)."""
        price = np.diff(self.values[rows], axis=1)
        time = np.broadcast_to(np.diff(self.times), price.shape)
        return np.stack([time, price], axis=-1)

    def subset(self, indices: Sequence[int]) -> 'PathBatch':
        indices = np.asarray(indices, dtype=int)
        return replace(
            self,
            values=self.values[indices],
            path_seeds=tuple(self.path_seeds[i] for i in indices) if self.path_seeds else (),
            window_ids=[self.window_ids[i] for i in indices] if self.window_ids else None,
            factors={name: array[indices] for name, array in self.factors.items()},
        )

    def concat(self, other: 'PathBatch') -> 'PathBatch':
        if not np.array_equal(self.times, other.times):
            raise InvalidParameterError("cannot concatenate batches on different grids")
        ids = None
        if self.window_ids is not None and other.window_ids is not None:
            ids = self.window_ids + other.window_ids
        factors = {name: np.concatenate([array, other.factors[name]])
                   for name, array in self.factors.items() if name in other.factors}
        return PathBatch(self.times, np.concatenate([self.values, other.values]),
                         seed=self.seed, path_seeds=self.path_seeds + other.path_seeds,
                         window_ids=ids, factors=factors, params=self.params)


def _path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


@lru_cache(maxsize=8)
def fbm_cholesky(T: float, steps: int, hurst: float) -> np.ndarray:
    """Lower Cholesky factor of the fBM covariance on the grid points t1..tm."""
    t = np.linspace(0.0, T, steps + 1)[1:]
    two_h = 2.0 * hurst
    cov = 0.5 * (t[:, None] ** two_h + t[None, :] ** two_h - np.abs(t[:, None] - t[None, :]) ** two_h)
    factor = linalg.cholesky(cov, lower=True)
    factor.setflags(write=False)
    return factor


def _draw_block(params: ModelParams, seed: int, indices: range) -> Dict[str, np.ndarray]:
    """Per-path noise for one block; each path reads only its own stream."""
    steps = int(params.steps)
    noise: Dict[str, List[np.ndarray]] = {'price': []}
    if params.model == 'ou_signal':
        noise['signal'] = []
    if params.model == 'order_flow':
        noise['jumps'] = []

    cache: Dict[int, np.ndarray] = {}
    for i in indices:
        if params.antithetic:
            pair = i // 2
            if pair not in cache:
                cache = {pair: _path_rng(seed, pair).standard_normal(steps)}
            z = cache[pair] if i % 2 == 0 else -cache[pair]
            noise['price'].append(z)
            continue

        rng = _path_rng(seed, i)
        noise['price'].append(rng.standard_normal(steps))
        if params.model == 'ou_signal':
            noise['signal'].append(rng.standard_normal(steps))
        elif params.model == 'order_flow':
            h = params.T / steps
            counts = rng.poisson(params.lambda0 * h, size=(2, steps))
            # sum of `count` exponential marks is Gamma(count, scale)
            marks = rng.gamma(np.maximum(counts, 1), params.mark_scale)
            noise['jumps'].append(np.where(counts > 0, marks, 0.0))
    return {name: np.array(draws) for name, draws in noise.items()}


def _integrate(params: ModelParams, noise: Dict[str, np.ndarray]) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """X on the grid (starting at 0) plus latent factors, by left-point Euler."""
    steps = int(params.steps)
    h = params.T / steps
    z = noise['price']
    n = z.shape[0]
    factors: Dict[str, np.ndarray] = {}
    x = np.zeros((n, steps + 1))

    if params.model == 'bm':
        x[:, 1:] = params.sigma * np.sqrt(h) * np.cumsum(z, axis=1)
    elif params.model == 'fbm':
        x[:, 1:] = params.sigma * z @ fbm_cholesky(float(params.T), steps, float(params.H)).T
    elif params.model == 'ou_signal':
        signal = np.empty((n, steps + 1))
        signal[:, 0] = params.I0
        zb = noise['signal']
        for k in range(steps):
            signal[:, k + 1] = signal[:, k] - params.gamma * signal[:, k] * h + params.sigma0 * np.sqrt(h) * zb[:, k]
            x[:, k + 1] = x[:, k] + signal[:, k] * h + params.sigma * np.sqrt(h) * z[:, k]
        factors['signal'] = signal
    else:
        jumps = noise['jumps']
        mu_plus = np.empty((n, steps + 1))
        mu_minus = np.empty((n, steps + 1))
        mu_plus[:, 0] = mu_minus[:, 0] = params.mu0
        for k in range(steps):
            mu_plus[:, k + 1] = mu_plus[:, k] * (1.0 - params.kappa * h) + jumps[:, 0, k]
            mu_minus[:, k + 1] = mu_minus[:, k] * (1.0 - params.kappa * h) + jumps[:, 1, k]
            drift = params.k_flow * (mu_plus[:, k] - mu_minus[:, k]) * h
            x[:, k + 1] = x[:, k] + drift + params.sigma * np.sqrt(h) * z[:, k]
        factors['mu_plus'] = mu_plus
        factors['mu_minus'] = mu_minus
    return x, factors


def _simulate_block(params: ModelParams, seed: int, indices: range):
    return _integrate(params, _draw_block(params, seed, indices))


def simulate(params: ModelParams, n_paths: int, seed: int, threads: int = 1) -> PathBatch:
    """
    Simulate n_paths midprice paths as augmented (t, 1 + X_t).

    Path i draws from the stream SeedSequence(seed, spawn_key=(i,)) (pair
    i // 2 when antithetic), so the batch does not depend on `threads`.
    """
    if n_paths < 1:
        raise InvalidParameterError(f"n_paths must be >= 1, got {n_paths}")
    if seed < 0:
        raise InvalidParameterError(f"seed must be non-negative, got {seed}")

    blocks = [range(start, min(start + SIMULATION_BLOCK, n_paths))
              for start in range(0, n_paths, SIMULATION_BLOCK)]
    logger.debug(f"Simulating {n_paths} {params.model} paths in {len(blocks)} blocks "
                 f"(steps={params.steps}, threads={threads})")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda block: _simulate_block(params, seed, block), blocks))

    x = np.concatenate([result[0] for result in results])
    factors = {name: np.concatenate([result[1][name] for result in results]) for name in results[0][1]}
    if params.antithetic:
        path_seeds = tuple((seed, i // 2) for i in range(n_paths))
    else:
        path_seeds = tuple((seed, i) for i in range(n_paths))
    logger.info(f"Simulated {n_paths} {params.model} paths on [0, {params.T}] with {params.steps} steps")
    return PathBatch(params.grid(), 1.0 + x, seed=seed, path_seeds=path_seeds,
                     factors=factors, params=params)


def _resample_previous_tick(t: np.ndarray, price: np.ndarray, grid: np.ndarray) -> np.ndarray:
    positions = np.searchsorted(t, grid, side='right') - 1
    return price[np.clip(positions, 0, None)]


def load_windows_csv(file: Union[str, Path], window_length: float, normalize: bool = True,
                     horizon: Optional[float] = None, steps: Optional[int] = None) -> PathBatch:
    """
    Read `window_id,t,price` rows into one path per window, in file order.

    Times are seconds from the window start and are rescaled so that
    window_length maps onto `horizon` (default: window_length). With
    normalize, each window is divided by its first price.
    """
    if not window_length > 0:
        raise InvalidParameterError(f"window_length must be > 0, got {window_length}")
    horizon = window_length if horizon is None else horizon
    if not horizon > 0:
        raise InvalidParameterError(f"horizon must be > 0, got {horizon}")

    try:
        frame = pd.read_csv(file, dtype={'window_id': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"cannot parse {file}: {e}") from e
    missing = [column for column in CSV_COLUMNS if column not in frame.columns]
    if missing:
        raise DataFormatError(f"{file} is missing columns {missing}; expected header {','.join(CSV_COLUMNS)}")
    if frame.empty:
        raise DataFormatError(f"{file} contains no rows")
    if frame['window_id'].isna().any():
        row = int(frame.index[frame['window_id'].isna()][0]) + 2
        raise DataFormatError(f"{file} line {row} has no window_id")

    frame['t'] = pd.to_numeric(frame['t'], errors='coerce')
    frame['price'] = pd.to_numeric(frame['price'], errors='coerce')

    window_ids: List[str] = []
    grids: List[np.ndarray] = []
    prices: List[np.ndarray] = []
    for window_id, window in frame.groupby('window_id', sort=False):
        if window[['t', 'price']].isna().any().any():
            raise DataFormatError("malformed row (non-numeric or missing t/price)", window_id)
        t = window['t'].to_numpy(dtype=float)
        price = window['price'].to_numpy(dtype=float)
        if t.size < 2:
            raise DataFormatError(f"window needs at least 2 observations, got {t.size}", window_id)
        if np.any(np.diff(t) <= 0):
            raise DataFormatError("timestamps are not strictly increasing", window_id)
        if t[0] < 0 or t[-1] > window_length * (1.0 + 1e-12):
            raise DataFormatError(f"timestamps must lie in [0, {window_length}]", window_id)
        if normalize:
            if price[0] == 0:
                raise DataFormatError("first price is zero, cannot normalise", window_id)
            price = price / price[0]
        window_ids.append(str(window_id))
        grids.append(t)
        prices.append(price)

    if steps is not None:
        if steps < 2:
            raise InvalidParameterError(f"steps must be >= 2, got {steps}")
        grid = np.linspace(0.0, window_length, int(steps) + 1)
        prices = [_resample_previous_tick(t, price, grid) for t, price in zip(grids, prices)]
    else:
        # native grids start at the first tick and hold the last price to the window end
        aligned = []
        for t, price in zip(grids, prices):
            t = t - t[0]
            if t[-1] < window_length * (1.0 - 1e-12):
                t, price = np.append(t, window_length), np.append(price, price[-1])
            aligned.append((t, price))
        grids = [t for t, _ in aligned]
        prices = [price for _, price in aligned]
        grid = grids[0]
        for window_id, t in zip(window_ids, grids):
            if t.shape != grid.shape or not np.array_equal(t, grid):
                raise DataFormatError(
                    "grid differs from the first window; pass steps to resample", window_id)

    logger.info(f"Loaded {len(window_ids)} windows from {file} "
                f"({grid.size - 1} steps, normalize={normalize})")
    return PathBatch(grid * (horizon / window_length), np.array(prices), window_ids=window_ids)


def save_windows_csv(batch: PathBatch, file: Union[str, Path], window_length: Optional[float] = None):
    """Write a batch in the window CSV schema; times are mapped back onto [0, window_length]."""
    window_length = batch.T if window_length is None else window_length
    ids = batch.window_ids or [f"w{i:05d}" for i in range(batch.n_paths)]
    seconds = (batch.times - batch.times[0]) * (window_length / batch.T)
    frame = pd.DataFrame({
        'window_id': np.repeat(ids, batch.times.size),
        't': np.tile(seconds, batch.n_paths),
        'price': batch.values.reshape(-1),
    })
    Path(file).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(file, index=False, float_format='%.17g')
    logger.debug(f"Wrote {batch.n_paths} windows to {file}")


def split_batch(batch: PathBatch, train_fraction: float) -> Tuple[PathBatch, PathBatch]:
    """Chronological split: the first paths train, the rest test."""
    if not 0 < train_fraction < 1:
        raise InvalidParameterError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(batch.n_paths * train_fraction))
    if n_train < 1 or n_train >= batch.n_paths:
        raise InvalidParameterError(
            f"splitting {batch.n_paths} paths at {train_fraction} leaves an empty side")
    return batch.subset(range(n_train)), batch.subset(range(n_train, batch.n_paths))
