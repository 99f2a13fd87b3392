#!/usr/bin/env python3
"""
Maximise the expected execution cost over signature trading speeds.

Linear impacts give a concave quadratic in the coefficients of ℓ, solved
directly with a Cholesky factorisation after checking negative
definiteness. Other impacts use gradient ascent from ℓ = 0 with an Armijo
backtracking line search.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from algebra import TensorFunctional, Word, from_coefficients, pair
from errors import InvalidParameterError, NotNegativeDefiniteError, SingularSystemError
from problem import (DIMENSION, ProblemSpec, Strategy, assemble_quadratic, cost_functional,
                     objective_gradient, objective_value, quadratic_value)
from signature import pair_batch

logger = logging.getLogger(__name__)

METHODS = ('quadratic_direct', 'gradient_ascent')

DEFINITENESS_TOLERANCE = 1e-10
GRADIENT_TOLERANCE = 1e-9
MAX_ITERATIONS = 100_000
ARMIJO = 1e-4
BACKTRACK = 0.5
VALUE_SLACK = 1e-13
SELECTION_Z = 2.0
GRID_POINTS = 21
GRID_ROUNDS = 12


@dataclass
class SolverReport:
    method: str
    iterations: int
    gradient_norm: float
    objective: float
    negative_definite: Optional[bool] = None
    max_eigenvalue: Optional[float] = None
    inactive_words: List[str] = field(default_factory=list)
    converged: bool = True
    wall_time: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.objective):
            raise InvalidParameterError(f"solver produced a non-finite objective {self.objective}")

    def to_dict(self, include_wall_time: bool = False) -> Dict[str, Any]:
        data = asdict(self)
        if not include_wall_time:
            data.pop('wall_time')
        return data


def check_definiteness(A: np.ndarray) -> Tuple[bool, float]:
    """(A ≺ 0 within 1e-10·‖A‖, most positive eigenvalue)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {A.shape}")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-12 * max(1.0, scale):
        raise InvalidParameterError("definiteness check needs a symmetric matrix")
    if A.size == 0:
        return True, -math.inf
    extreme = float(linalg.eigvalsh(A)[-1])
    return extreme < -DEFINITENESS_TOLERANCE * scale, extreme


def _direct(A: np.ndarray, b: np.ndarray, labels: List[str]) -> Tuple[np.ndarray, List[str], float]:
    """Maximiser of ½xᵀAx + bᵀx, pinning words that never enter the objective."""
    n = len(b)
    row_zero = np.all(A == 0.0, axis=1)
    inactive = row_zero & (b == 0.0)
    unbounded = row_zero & (b != 0.0)
    if np.any(unbounded):
        words = [labels[i] for i in np.flatnonzero(unbounded)]
        raise NotNegativeDefiniteError(
            f"objective is linear and unbounded along words {words}", max_eigenvalue=0.0)

    active = np.flatnonzero(~inactive)
    x = np.zeros(n)
    if active.size == 0:
        return x, labels, -math.inf
    block = A[np.ix_(active, active)]
    diagonal = np.diag(block)
    if np.any(diagonal >= 0.0):
        _, extreme = check_definiteness(block)
        raise NotNegativeDefiniteError("quadratic objective is not concave", max_eigenvalue=max(extreme, 0.0))

    # Jacobi equilibration is a congruence: same inertia, comparable diagonal
    scale = 1.0 / np.sqrt(-diagonal)
    equilibrated = scale[:, None] * block * scale[None, :]
    equilibrated = 0.5 * (equilibrated + equilibrated.T)
    definite, extreme = check_definiteness(equilibrated)
    if not definite:
        raise NotNegativeDefiniteError("quadratic objective is not strictly concave", max_eigenvalue=extreme)
    try:
        factor = linalg.cho_factor(-equilibrated, lower=True)
        y = linalg.cho_solve(factor, scale * b[active])
    except linalg.LinAlgError as e:
        raise SingularSystemError(f"cannot factorise the quadratic objective: {e}") from e
    if not np.all(np.isfinite(y)):
        raise SingularSystemError("quadratic solve produced non-finite coefficients")
    x[active] = scale * y
    return x, [labels[i] for i in np.flatnonzero(inactive)], extreme


def gradient_ascent(value: Callable[[np.ndarray], float], gradient: Callable[[np.ndarray], np.ndarray],
                    x0: np.ndarray, tolerance: float = GRADIENT_TOLERANCE,
                    max_iterations: int = MAX_ITERATIONS) -> Tuple[np.ndarray, float, np.ndarray, int, bool]:
    """
    Steepest ascent with Armijo backtracking; the first trial step is the
    Barzilai-Borwein length, and the first step satisfying sufficient
    increase is accepted.
    """
    x = np.array(x0, dtype=float)
    v = value(x)
    g = gradient(x)
    step = 1.0
    for iteration in range(max_iterations):
        norm = float(np.linalg.norm(g))
        if norm <= tolerance * (1.0 + abs(v)):
            return x, v, g, iteration, True
        t = step
        # increases below the rounding level of v count as sufficient
        slack = VALUE_SLACK * (1.0 + abs(v))
        while True:
            candidate = x + t * g
            candidate_value = value(candidate)
            if candidate_value >= v + ARMIJO * t * norm ** 2 - slack:
                break
            t *= BACKTRACK
            if t * norm < 1e-300:
                logger.warning(f"[SOLVER_ERROR] line search stalled at iteration {iteration}")
                return x, v, g, iteration, False
        new_g = gradient(candidate)
        s, yk = candidate - x, new_g - g
        curvature = float(s @ yk)
        # ascent: curvature of the objective along s is negative
        step = float(s @ s) / -curvature if curvature < 0 else 2.0 * t
        x, v, g = candidate, candidate_value, new_g
    logger.warning(f"[SOLVER_ERROR] gradient ascent hit {max_iterations} iterations")
    return x, v, g, max_iterations, False


def solve(spec: ProblemSpec, es, method: Optional[str] = None) -> Tuple[Strategy, SolverReport]:
    """Optimal ℓ of degree <= spec.level_l for the expected signature `es`."""
    if method is not None and method not in METHODS:
        raise InvalidParameterError(f"unknown solver method '{method}', expected one of {METHODS}")
    if method == 'quadratic_direct' and not spec.impact.is_linear:
        raise InvalidParameterError("quadratic_direct needs a linear impact model")
    method = method or ('quadratic_direct' if spec.impact.is_linear else 'gradient_ascent')

    started = time.perf_counter()
    basis = spec.basis()
    labels = [str(word) for word in basis]
    logger.info(f"Solving for ℓ on {len(basis)} words (M={spec.level_l}, N={es.level}, "
                f"impact={spec.impact.kind}, method={method})")

    inactive: List[str] = []
    definite: Optional[bool] = None
    extreme: Optional[float] = None
    converged = True
    if spec.impact.is_linear:
        quadratic = assemble_quadratic(spec, es, basis)
        A, b, _ = quadratic
        if method == 'quadratic_direct':
            x, inactive, extreme = _direct(A, b, labels)
            definite = True
            iterations = 1
        else:
            x, _, _, iterations, converged = gradient_ascent(
                lambda z: quadratic_value(z, quadratic), lambda z: A @ z + b, np.zeros(len(basis)))
        objective = quadratic_value(x, quadratic)
        grad = A @ x + b
    else:
        def value(z):
            return objective_value(from_coefficients(basis, z, DIMENSION), spec, es)

        def gradient(z):
            return objective_gradient(from_coefficients(basis, z, DIMENSION), spec, es, basis)

        x, objective, grad, iterations, converged = gradient_ascent(value, gradient, np.zeros(len(basis)))

    report = SolverReport(
        method=method,
        iterations=int(iterations),
        gradient_norm=float(np.linalg.norm(grad)),
        objective=float(objective),
        negative_definite=definite,
        max_eigenvalue=extreme if extreme is None or math.isfinite(extreme) else None,
        inactive_words=inactive,
        converged=converged,
        wall_time=time.perf_counter() - started,
    )
    if inactive:
        logger.info(f"Pinned {len(inactive)} words that never enter the objective: {inactive}")
    logger.info(f"Solver {method}: objective={report.objective:.10g}, |grad|={report.gradient_norm:.3e}, "
                f"iterations={report.iterations}")

    strategy = Strategy(
        ell=from_coefficients(basis, x, DIMENSION),
        level_l=spec.level_l,
        metadata={
            'spec': spec.to_dict(),
            'expected_signature': {
                'level': es.level,
                'n_samples': getattr(es, 'n_samples', None),
                'initial_price': getattr(es, 'initial_price', None),
            },
            'solver': report.to_dict(),
        },
    )
    return strategy, report


def path_costs(ell: TensorFunctional, spec: ProblemSpec, signatures: Sequence[np.ndarray]) -> np.ndarray:
    """C(ℓ) on every path, pairing the cost functional with whole-path signature levels."""
    return pair_batch(cost_functional(ell, spec).to_dense(len(signatures) - 1), signatures)


def select_level(spec: ProblemSpec, es, signatures: Sequence[np.ndarray],
                 z: float = SELECTION_Z) -> Tuple[Strategy, SolverReport, List[Dict[str, Any]]]:
    """
    Solve for every control degree 0..spec.level_l and keep a higher degree
    only when its cost on held-out paths beats the degree kept so far by
    more than z paired standard errors.
    """
    if len(signatures) - 1 < spec.level_es:
        raise InvalidParameterError(
            f"validation signatures of level {len(signatures) - 1} are below level_es={spec.level_es}")
    n_paths = signatures[0].shape[0]
    if n_paths < 2:
        raise InvalidParameterError("order selection needs at least 2 validation paths")

    best, best_report = solve(replace(spec, level_l=0), es)
    best_costs = path_costs(best.ell, spec, signatures)
    history = [{'M': 0, 'objective': best_report.objective, 'validation_mean_cost': float(np.mean(best_costs)),
                'gain': None, 'standard_error': None, 'kept': True}]
    for m in range(1, spec.level_l + 1):
        candidate, report = solve(replace(spec, level_l=m), es)
        costs = path_costs(candidate.ell, spec, signatures)
        diff = costs - best_costs
        gain = float(np.mean(diff))
        se = float(np.std(diff, ddof=1) / math.sqrt(n_paths))
        kept = gain > z * se
        history.append({'M': m, 'objective': report.objective, 'validation_mean_cost': float(np.mean(costs)),
                        'gain': gain, 'standard_error': se, 'kept': kept})
        logger.info(f"Order selection M={m}: held-out gain {gain:.3e} ± {se:.1e} "
                    f"({'kept' if kept else 'dropped'})")
        if kept:
            best, best_report, best_costs = candidate, report, costs

    best.metadata['selection'] = {'z': z, 'n_validation': int(n_paths), 'selected_M': best.level_l,
                                  'candidates': history}
    logger.info(f"Selected control degree M={best.level_l} of {spec.level_l}")
    return best, best_report, history


def grid_search(spec: ProblemSpec, es, points: int = GRID_POINTS,
                rounds: int = GRID_ROUNDS) -> Tuple[TensorFunctional, float, Dict[str, Any]]:
    """
    Brute-force maximiser over degree <= 1 functionals a·∅ + b·[1] + c·[2].

    Each round evaluates a full points³ grid around the best point so far;
    the box doubles when the best point sits on its edge and shrinks
    fourfold otherwise. The first box scales every word by the typical size
    of its increment over the horizon.
    """
    if points < 3 or points % 2 == 0:
        raise InvalidParameterError(f"grid needs an odd number of points >= 3, got {points}")
    linear_spec = replace(spec, level_l=1)
    basis = linear_spec.basis()

    if spec.impact.is_linear:
        A, b, c = assemble_quadratic(linear_spec, es, basis)

        def values(grid: np.ndarray) -> np.ndarray:
            return 0.5 * np.einsum('pi,ij,pj->p', grid, A, grid) + grid @ b + c
    else:
        def values(grid: np.ndarray) -> np.ndarray:
            return np.array([objective_value(from_coefficients(basis, x, DIMENSION), linear_spec, es)
                             for x in grid])

    speed = max(abs(spec.q0) / spec.T, 1e-12)
    half_width = np.empty(len(basis))
    for i, word in enumerate(basis):
        if not word.letters:
            half_width[i] = 4.0 * speed
            continue
        # E[<w, S_{0,T}>²] = 2 E[<ww, S_{0,T}>]
        square = 2.0 * pair(TensorFunctional({Word(word.letters * 2): 1.0}, DIMENSION), es)
        scale = math.sqrt(square) if square > 0 else 0.0
        half_width[i] = 4.0 * speed / scale if scale > 1e-12 else 1.0

    center = np.zeros(len(basis))
    offsets = np.linspace(-1.0, 1.0, points)
    edge = (points - 1) // 2
    best_value = float(values(center[None, :])[0])
    evaluated = 1
    for _ in range(rounds):
        mesh = np.stack(np.meshgrid(*[offsets] * len(basis), indexing='ij'), axis=-1).reshape(-1, len(basis))
        grid = center + mesh * half_width
        grid_values = values(grid)
        evaluated += grid_values.size
        index = int(np.argmax(grid_values))
        on_edge = np.abs(np.rint(mesh[index] * edge)) == edge
        if grid_values[index] >= best_value:
            best_value = float(grid_values[index])
            center = grid[index]
        half_width = np.where(on_edge, 2.0 * half_width, 0.25 * half_width)

    ell = from_coefficients(basis, center, DIMENSION)
    logger.info(f"Grid search over {len(basis)} words: objective {best_value:.10g} "
                f"after {evaluated} evaluations")
    return ell, best_value, {'points': points, 'rounds': rounds, 'evaluations': evaluated,
                             'objective': best_value, 'coefficients': ell.to_dict()}
