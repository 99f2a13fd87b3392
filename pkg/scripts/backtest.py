#!/usr/bin/env python3
"""
Replay execution strategies on price paths.

Speeds and impact terms come from streaming prefix signatures; inventory,
wealth and the running penalty are integrated directly with left-point
sums on the path grid, so a backtest checks the symbolic cost functional
instead of reusing it. Benchmarks (TWAP, Almgren-Chriss) run through the
same impact model.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from algebra import TensorFunctional
from errors import BenchmarkInfeasibleError, InvalidParameterError, LevelShortfallError
from expsig import signature_block_size, stream_signatures
from market import PathBatch
from problem import DIMENSION, ProblemSpec, Strategy, impact_functional
from signature import pair_batch

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['path_id', 't', 'theta', 'Q', 'P', 'W']


@dataclass
class ExecutionTrace:
    """One path's speed, inventory, execution price and wealth on the grid."""

    times: np.ndarray
    theta: np.ndarray
    inventory: np.ndarray
    price: Optional[np.ndarray] = None
    wealth: Optional[np.ndarray] = None
    cost: Optional[float] = None


@dataclass
class BacktestReport:
    """Per-path series of a replayed strategy plus benchmark comparisons."""

    label: str
    times: np.ndarray
    theta: np.ndarray
    inventory: np.ndarray
    price: np.ndarray
    wealth: np.ndarray
    running_penalty: np.ndarray
    costs: np.ndarray
    alpha: float
    path_ids: List[str] = field(default_factory=list)
    benchmarks: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    savings: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.costs.size

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs))

    @property
    def cost_standard_error(self) -> float:
        if self.n_paths < 2:
            return 0.0
        return float(np.std(self.costs, ddof=1) / math.sqrt(self.n_paths))

    @property
    def liquidated_wealth(self) -> np.ndarray:
        """W_T plus the proceeds of selling Q_T at P_T - αQ_T."""
        q_end = self.inventory[:, -1]
        return self.wealth[:, -1] + q_end * (self.price[:, -1] - self.alpha * q_end)

    def trace(self, index: int) -> ExecutionTrace:
        return ExecutionTrace(self.times, self.theta[index], self.inventory[index],
                              self.price[index], self.wealth[index], float(self.costs[index]))

    def attach_benchmark(self, name: str, benchmark: 'BacktestReport'):
        """Record a benchmark's costs, the paired difference and savings per share."""
        self.benchmarks[name] = {
            'mean_cost': benchmark.mean_cost,
            'cost_standard_error': benchmark.cost_standard_error,
            'paired': compare(self, benchmark),
        }
        self.savings[name] = savings_per_share(self.liquidated_wealth, benchmark.liquidated_wealth)

    def summary(self) -> Dict[str, Any]:
        q_end = self.inventory[:, -1]
        data = {
            'label': self.label,
            'n_paths': self.n_paths,
            'mean_cost': self.mean_cost,
            'cost_standard_error': self.cost_standard_error,
            'mean_terminal_wealth': float(np.mean(self.wealth[:, -1])),
            'mean_running_penalty': float(np.mean(self.running_penalty)),
            'mean_terminal_inventory': float(np.mean(q_end)),
            'max_abs_terminal_inventory': float(np.max(np.abs(q_end))),
            'theta_mean': float(np.mean(self.theta)),
            'theta_std': float(np.std(self.theta)),
            'benchmarks': self.benchmarks,
        }
        for name, values in self.savings.items():
            data.setdefault('savings_per_share', {})[name] = {
                'mean_bps': float(np.mean(values)),
                'standard_error_bps': float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0,
                'share_positive': float(np.mean(values > 0)),
            }
        return data

    def _ids(self) -> List[str]:
        return self.path_ids or [str(i) for i in range(self.n_paths)]

    def traces_frame(self, max_paths: Optional[int] = None) -> pd.DataFrame:
        n = self.n_paths if max_paths is None else min(max_paths, self.n_paths)
        m = self.times.size
        return pd.DataFrame({
            'path_id': np.repeat(self._ids()[:n], m),
            't': np.tile(self.times, n),
            'theta': self.theta[:n].reshape(-1),
            'Q': self.inventory[:n].reshape(-1),
            'P': self.price[:n].reshape(-1),
            'W': self.wealth[:n].reshape(-1),
        }, columns=TRACE_COLUMNS)

    def costs_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'path_id': self._ids(),
            'cost': self.costs,
            'terminal_wealth': self.wealth[:, -1],
            'liquidated_wealth': self.liquidated_wealth,
            'terminal_inventory': self.inventory[:, -1],
        })
        for name, values in self.savings.items():
            frame[f'savings_bps_vs_{name}'] = values
        return frame

    def inventory_curve(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.times, 'mean_Q': self.inventory.mean(axis=0),
                             'mean_theta': self.theta.mean(axis=0)})


def _check_grid(batch: PathBatch, spec: ProblemSpec):
    if abs(batch.T - spec.T) > 1e-9 * spec.T:
        raise InvalidParameterError(f"batch horizon {batch.T} does not match problem horizon {spec.T}")


def _integrate(label: str, batch: PathBatch, spec: ProblemSpec, theta: np.ndarray,
               impact: np.ndarray) -> BacktestReport:
    """Left-point quadrature of inventory, wealth and running penalty."""
    h = np.diff(batch.times)
    price = batch.values - impact
    inventory = np.empty_like(theta)
    inventory[:, 0] = spec.q0
    inventory[:, 1:] = spec.q0 - np.cumsum(theta[:, :-1] * h, axis=1)
    wealth = np.zeros_like(theta)
    wealth[:, 1:] = np.cumsum(price[:, :-1] * theta[:, :-1] * h, axis=1)
    running = np.sum(inventory[:, :-1] ** 2 * h, axis=1)
    q_end = inventory[:, -1]
    costs = wealth[:, -1] - spec.phi * running + q_end * (price[:, -1] - spec.alpha * q_end)
    return BacktestReport(label, batch.times, theta, inventory, price, wealth, running, costs,
                          spec.alpha, path_ids=list(batch.window_ids or []))


def run_strategy(strategy: Strategy, batch: PathBatch, spec: ProblemSpec, level: Optional[int] = None,
                 threads: int = 1, label: str = 'signature') -> BacktestReport:
    """Replay θ_t = <ℓ, sig_{0,t}> with impact <g^ℓ, sig_{0,t}> on every path."""
    _check_grid(batch, spec)
    ell = strategy.ell
    impact = impact_functional(spec.impact, ell)
    needed = max(ell.degree, impact.degree, 0)
    if level is None:
        level = needed
    elif level < needed:
        raise LevelShortfallError(
            f"prefix signatures of level {level} cannot evaluate functionals of degree {needed}",
            required=needed, available=level)

    dense_ell = ell.to_dense(level)
    dense_impact = impact.to_dense(level)
    n, m = batch.n_paths, batch.steps + 1
    theta = np.empty((n, m))
    impact_values = np.empty((n, m))

    def replay(rows: slice):
        for k, levels in stream_signatures(batch, level, rows):
            pair_batch(dense_ell, levels, out=theta[rows, k])
            pair_batch(dense_impact, levels, out=impact_values[rows, k])

    block = signature_block_size(DIMENSION, level)
    blocks = [slice(start, min(start + block, n)) for start in range(0, n, block)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        list(pool.map(replay, blocks))

    report = _integrate(label, batch, spec, theta, impact_values)
    logger.info(f"Backtest {label}: {n} paths, mean cost {report.mean_cost:.8f} "
                f"± {report.cost_standard_error:.2e}")
    return report


def run_schedule(speeds: np.ndarray, batch: PathBatch, spec: ProblemSpec, label: str = 'schedule') -> BacktestReport:
    """Replay a deterministic speed schedule θ_{t_k} under the problem's impact model."""
    _check_grid(batch, spec)
    speeds = np.asarray(speeds, dtype=float).reshape(-1)
    if speeds.size != batch.steps + 1:
        raise InvalidParameterError(f"schedule has {speeds.size} speeds for a grid of {batch.steps + 1} points")
    theta = np.broadcast_to(speeds, batch.values.shape).copy()
    traded = np.zeros_like(theta)
    traded[:, 1:] = np.cumsum(theta[:, :-1] * np.diff(batch.times), axis=1)
    impact = spec.impact.price_impact(theta, traded)
    report = _integrate(label, batch, spec, theta, impact)
    logger.info(f"Backtest {label}: {batch.n_paths} paths, mean cost {report.mean_cost:.8f} "
                f"± {report.cost_standard_error:.2e}")
    return report


def twap_strategy(spec: ProblemSpec) -> Strategy:
    """Constant speed q0/T, i.e. ℓ = (q0/T)·∅."""
    return Strategy(TensorFunctional.unit(DIMENSION) * (spec.q0 / spec.T), 0, {'benchmark': 'twap'})


def almgren_chriss_trace(spec: ProblemSpec, grid: np.ndarray) -> ExecutionTrace:
    """
    Deterministic risk-penalised liquidation under temporary (λ) and
    permanent (k) impact with terminal penalty α and running penalty φ.
    """
    impact = spec.impact
    if impact.kind not in ('temporary_plus_permanent', 'temporary_linear') or not impact.lam > 0:
        raise BenchmarkInfeasibleError(
            f"the Almgren-Chriss benchmark needs linear temporary impact with lam > 0, got {impact.kind}")
    lam, k = impact.lam, impact.k if impact.kind == 'temporary_plus_permanent' else 0.0
    a = spec.alpha - 0.5 * k
    root = math.sqrt(lam * spec.phi)
    if a <= root:
        raise BenchmarkInfeasibleError(
            f"alpha={spec.alpha} must exceed k/2 + sqrt(lam*phi) = {0.5 * k + root:.6g}")

    t = np.asarray(grid, dtype=float) - float(grid[0])
    T = spec.T
    q0 = spec.q0
    if spec.phi == 0:
        horizon = T + lam / a
        inventory = q0 * (horizon - t) / horizon
        theta = np.full_like(t, q0 / horizon)
    else:
        gamma = math.sqrt(spec.phi / lam)
        zeta = (a + root) / (a - root)
        # numerator and denominator scaled by e^{-γT}
        denominator = zeta - math.exp(-2.0 * gamma * T)
        inventory = q0 * (zeta * np.exp(-gamma * t) - np.exp(-gamma * (2.0 * T - t))) / denominator
        theta = q0 * gamma * (zeta * np.exp(-gamma * t) + np.exp(-gamma * (2.0 * T - t))) / denominator
    return ExecutionTrace(t + float(grid[0]), theta, inventory)


def savings_per_share(w, w_ac):
    """(w - w_ac) / w_ac in basis points."""
    w = np.asarray(w, dtype=float)
    w_ac = np.asarray(w_ac, dtype=float)
    if np.any(w_ac == 0):
        raise InvalidParameterError("savings per share is undefined for zero benchmark wealth")
    result = (w - w_ac) / w_ac * 1e4
    return float(result) if result.ndim == 0 else result


def compare(report: BacktestReport, benchmark: BacktestReport) -> Dict[str, Any]:
    """Paired difference of per-path costs, report minus benchmark."""
    if report.n_paths != benchmark.n_paths:
        raise InvalidParameterError(
            f"paired comparison needs the same paths, got {report.n_paths} and {benchmark.n_paths}")
    diff = report.costs - benchmark.costs
    se = float(np.std(diff, ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
    return {
        'label': report.label,
        'benchmark': benchmark.label,
        'mean_difference': float(np.mean(diff)),
        'standard_error': se,
        'n_paths': int(diff.size),
    }
