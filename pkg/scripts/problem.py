#!/usr/bin/env python3
"""
The execution problem as linear functionals on the augmented signature.

Letter 1 is time and letter 2 is the price coordinate (X_0 = 1). For a
signature trading speed ℓ the execution price is p - g^ℓ with p = 2 + ∅,
the inventory is h = q0·∅ - ℓ1, and the terminal cost pairs

    C(ℓ) = ((p - g^ℓ) ⧢ ℓ)1 - h^⧢2 (φ·1 + α·∅) + h ⧢ (p - g^ℓ)

with the expected signature. For linear impacts C is quadratic in the
coefficients of ℓ and is assembled into (A, b, c).
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from algebra import (TensorFunctional, Word, concat, pair, shuffle, shuffle_poly,
                     to_coefficients, words_up_to)
from errors import InvalidParameterError, LevelShortfallError

logger = logging.getLogger(__name__)

DIMENSION = 2
TIME = TensorFunctional.word((1,), DIMENSION)
UNIT = TensorFunctional.unit(DIMENSION)
# X_t = <2 + ∅, sig_{0,t}> because X_0 = 1
PRICE = TensorFunctional.word((2,), DIMENSION) + UNIT

IMPACT_KINDS = ('temporary_linear', 'permanent', 'temporary_plus_permanent', 'polynomial_temporary')
ORDER_MEANINGS = ('es', 'control')


@dataclass(frozen=True)
class ImpactModel:
    """Market impact g^ℓ: λℓ, kℓ1, both, or Q^⧢(ℓ) for a polynomial Q."""

    kind: str = 'temporary_linear'
    lam: float = 0.0
    k: float = 0.0
    poly: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in IMPACT_KINDS:
            raise InvalidParameterError(f"unknown impact '{self.kind}', expected one of {IMPACT_KINDS}")
        if self.lam < 0 or self.k < 0:
            raise InvalidParameterError(f"impact coefficients must be >= 0, got lam={self.lam}, k={self.k}")
        object.__setattr__(self, 'poly', tuple(float(a) for a in self.poly))
        if self.kind == 'polynomial_temporary':
            if not self.poly:
                raise InvalidParameterError("polynomial impact needs at least one coefficient")
            if not all(math.isfinite(a) for a in self.poly):
                raise InvalidParameterError(f"polynomial impact coefficients must be finite, got {self.poly}")

    @classmethod
    def temporary_linear(cls, lam: float) -> 'ImpactModel':
        return cls('temporary_linear', lam=lam)

    @classmethod
    def permanent(cls, k: float) -> 'ImpactModel':
        return cls('permanent', k=k)

    @classmethod
    def temporary_plus_permanent(cls, lam: float, k: float) -> 'ImpactModel':
        return cls('temporary_plus_permanent', lam=lam, k=k)

    @classmethod
    def polynomial_temporary(cls, coeffs: Sequence[float]) -> 'ImpactModel':
        return cls('polynomial_temporary', poly=tuple(coeffs))

    @property
    def poly_degree(self) -> int:
        """Degree of Q with trailing zeros dropped; 1 for the linear kinds."""
        if self.kind != 'polynomial_temporary':
            return 1
        nonzero = [i for i, a in enumerate(self.poly) if a != 0.0]
        return max(nonzero, default=0)

    @property
    def is_linear(self) -> bool:
        """True when g^ℓ is affine in ℓ, so the cost is quadratic."""
        return self.poly_degree <= 1

    def price_impact(self, speed: np.ndarray, traded: np.ndarray) -> np.ndarray:
        """Price displacement for speed θ_t after trading `traded` = q0 - Q_t shares."""
        if self.kind == 'polynomial_temporary':
            return np.polynomial.polynomial.polyval(speed, self.poly)
        temporary = self.lam * speed if self.kind != 'permanent' else 0.0 * speed
        if self.kind == 'temporary_linear':
            return temporary
        return temporary + self.k * traded

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'lam': self.lam, 'k': self.k, 'poly': list(self.poly)}


def required_es_level(level_l: int, impact: ImpactModel) -> int:
    """Degree of the cost functional for controls of degree <= level_l."""
    n = impact.poly_degree
    return max(2 * level_l + 3, (max(n, 1) + 1) * level_l + 1)


def control_level_for(level_es: int, impact: ImpactModel) -> int:
    """Largest M whose cost functional fits in level_es."""
    if level_es < 3:
        raise InvalidParameterError(f"expected-signature level must be >= 3, got {level_es}")
    m = 0
    while required_es_level(m + 1, impact) <= level_es:
        m += 1
    return m


def levels_from_order(order: int, order_means: str = 'es',
                      impact: Optional[ImpactModel] = None) -> Tuple[int, int]:
    """
    Map a reported truncation order to (M, N).

    'es': the order is N and M is the largest degree it supports
    (M = (N - 3) // 2 for linear impacts); 'control': the order is M.
    """
    impact = impact or ImpactModel()
    if order_means not in ORDER_MEANINGS:
        raise InvalidParameterError(f"order_means must be one of {ORDER_MEANINGS}, got '{order_means}'")
    if order_means == 'es':
        return control_level_for(order, impact), order
    if order < 0:
        raise InvalidParameterError(f"control order must be >= 0, got {order}")
    return order, required_es_level(order, impact)


@dataclass(frozen=True)
class ProblemSpec:
    """Liquidation problem: sell q0 over [0, T] with penalties α (terminal) and φ (running)."""

    q0: float = 1.0
    alpha: float = 0.0
    phi: float = 0.0
    impact: ImpactModel = field(default_factory=lambda: ImpactModel.temporary_linear(1e-3))
    T: float = 1.0
    level_l: int = 2
    level_es: int = 7

    def __post_init__(self):
        if not math.isfinite(self.q0):
            raise InvalidParameterError(f"q0 must be finite, got {self.q0}")
        if self.alpha < 0 or self.phi < 0:
            raise InvalidParameterError(f"alpha and phi must be >= 0, got alpha={self.alpha}, phi={self.phi}")
        if not self.T > 0:
            raise InvalidParameterError(f"T must be > 0, got {self.T}")
        if self.level_l < 0:
            raise InvalidParameterError(f"level_l must be >= 0, got {self.level_l}")
        required = required_es_level(self.level_l, self.impact)
        if self.level_es < required:
            raise LevelShortfallError(
                f"controls of degree {self.level_l} need an expected signature of level {required}, "
                f"got {self.level_es}", required=required, available=self.level_es)

    def basis(self) -> List[Word]:
        return words_up_to(DIMENSION, self.level_l)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['impact'] = self.impact.to_dict()
        return data


@dataclass(frozen=True)
class Strategy:
    """A signature trading speed θ_t = <ℓ, sig_{0,t}> and where it came from."""

    ell: TensorFunctional
    level_l: int
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.ell.dimension != DIMENSION:
            raise InvalidParameterError(f"strategies live over dimension {DIMENSION}, got {self.ell.dimension}")
        if self.ell.degree > self.level_l:
            raise InvalidParameterError(
                f"strategy functional has degree {self.ell.degree} above its level {self.level_l}")

    def speed(self, signature) -> float:
        return pair(self.ell, signature)

    def to_json(self) -> Dict[str, Any]:
        return {'level_l': self.level_l, 'ell': self.ell.to_dict(), 'metadata': self.metadata}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> 'Strategy':
        try:
            return cls(TensorFunctional.from_dict(data['ell'], DIMENSION), int(data['level_l']),
                       dict(data.get('metadata', {})))
        except KeyError as e:
            raise InvalidParameterError(f"strategy document is missing field {e}") from e


def _check_control(ell: TensorFunctional):
    if ell.dimension != DIMENSION:
        raise InvalidParameterError(f"controls live over dimension {DIMENSION}, got {ell.dimension}")


def impact_functional(impact: ImpactModel, ell: TensorFunctional) -> TensorFunctional:
    """g^ℓ for the given impact model."""
    _check_control(ell)
    if impact.kind == 'temporary_linear':
        return impact.lam * ell
    if impact.kind == 'permanent':
        return impact.k * concat(ell, TIME)
    if impact.kind == 'temporary_plus_permanent':
        return impact.lam * ell + impact.k * concat(ell, TIME)
    return shuffle_poly(impact.poly, ell)


def impact_derivative(impact: ImpactModel, ell: TensorFunctional, direction: TensorFunctional) -> TensorFunctional:
    """d/dε g^{ℓ+εw} at ε = 0."""
    if impact.kind != 'polynomial_temporary':
        return impact_functional(impact, direction)
    derivative = [i * a for i, a in enumerate(impact.poly)][1:] or [0.0]
    return shuffle(shuffle_poly(derivative, ell), direction)


def execution_price_functional(ell: TensorFunctional, impact: ImpactModel) -> TensorFunctional:
    return PRICE - impact_functional(impact, ell)


def inventory_functional(ell: TensorFunctional, q0: float) -> TensorFunctional:
    """Q_t = <q0·∅ - ℓ1, sig_{0,t}>."""
    _check_control(ell)
    return q0 * UNIT - concat(ell, TIME)


def wealth_functional(ell: TensorFunctional, impact: ImpactModel) -> TensorFunctional:
    """W_t = ∫ P_s θ_s ds = <((p - g^ℓ) ⧢ ℓ)1, sig_{0,t}>."""
    return concat(shuffle(execution_price_functional(ell, impact), ell), TIME)


def running_penalty_functional(ell: TensorFunctional, q0: float) -> TensorFunctional:
    """∫ Q_s² ds."""
    inventory = inventory_functional(ell, q0)
    return concat(shuffle(inventory, inventory), TIME)


def terminal_functional(ell: TensorFunctional, q0: float, alpha: float, impact: ImpactModel) -> TensorFunctional:
    """Q_T (P_T - α Q_T)."""
    inventory = inventory_functional(ell, q0)
    return shuffle(inventory, execution_price_functional(ell, impact)) - alpha * shuffle(inventory, inventory)


def cost_functional(ell: TensorFunctional, spec: ProblemSpec) -> TensorFunctional:
    _check_control(ell)
    cost = (wealth_functional(ell, spec.impact)
            - spec.phi * running_penalty_functional(ell, spec.q0)
            + terminal_functional(ell, spec.q0, spec.alpha, spec.impact))
    if cost.degree > spec.level_es:
        raise LevelShortfallError(
            f"cost functional has degree {cost.degree} above level_es={spec.level_es}",
            required=cost.degree, available=spec.level_es)
    return cost


def _check_expected_signature(es, required: int):
    initial_price = getattr(es, 'initial_price', 1.0)
    if initial_price is None or abs(initial_price - 1.0) > 1e-12:
        raise InvalidParameterError(
            f"the price functional assumes paths start at 1, expected signature has initial price "
            f"{initial_price}; normalise the data first")
    if es.dimension != DIMENSION:
        raise InvalidParameterError(f"expected signature must be over dimension {DIMENSION}, got {es.dimension}")
    if es.level < required:
        raise LevelShortfallError(
            f"expected signature of level {es.level} cannot evaluate a cost of degree {required}",
            required=required, available=es.level)


def objective_value(ell: TensorFunctional, spec: ProblemSpec, es) -> float:
    """E[C(ℓ)] = <cost functional, expected signature>."""
    cost = cost_functional(ell, spec)
    _check_expected_signature(es, cost.degree)
    return pair(cost, es)


def directional_cost_functional(ell: TensorFunctional, direction: TensorFunctional,
                                spec: ProblemSpec) -> TensorFunctional:
    """d/dε of the cost functional at ℓ along w."""
    impact = spec.impact
    price = execution_price_functional(ell, impact)
    dg = impact_derivative(impact, ell, direction)
    inventory = inventory_functional(ell, spec.q0)
    shifted = concat(direction, TIME)
    penalty = concat(shuffle(inventory, shifted), spec.phi * TIME + spec.alpha * UNIT)
    return (concat(shuffle(price, direction) - shuffle(dg, ell), TIME)
            + 2.0 * penalty
            - shuffle(shifted, price)
            - shuffle(inventory, dg))


def objective_gradient(ell: TensorFunctional, spec: ProblemSpec, es, basis: Sequence[Word],
                       quadratic: Optional[Tuple[np.ndarray, np.ndarray, float]] = None) -> np.ndarray:
    """Partial derivatives of objective_value in the coefficients of ℓ on `basis`."""
    _check_expected_signature(es, required_es_level(spec.level_l, spec.impact))
    if spec.impact.is_linear:
        A, b, _ = quadratic if quadratic is not None else assemble_quadratic(spec, es, basis)
        return A @ to_coefficients(ell, basis) + b
    return np.array([pair(directional_cost_functional(ell, TensorFunctional({word: 1.0}, DIMENSION), spec), es)
                     for word in basis])


def _affine_impact(impact: ImpactModel) -> Tuple[TensorFunctional, Callable[[TensorFunctional], TensorFunctional]]:
    """g^ℓ = g0 + L(ℓ) for impacts that are affine in ℓ."""
    if impact.kind == 'polynomial_temporary':
        constant = impact.poly[0] * UNIT
        slope = impact.poly[1] if len(impact.poly) > 1 else 0.0
        return constant, lambda u: slope * u
    return TensorFunctional.zero(DIMENSION), lambda u: impact_functional(impact, u)


def assemble_quadratic(spec: ProblemSpec, es, basis: Sequence[Word]) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    (A, b, c) with objective_value(ℓ) = ½ xᵀAx + bᵀx + c for x the
    coefficients of ℓ on `basis`; A is symmetric.
    """
    if not spec.impact.is_linear:
        raise InvalidParameterError(
            f"polynomial impact of degree {spec.impact.poly_degree} does not give a quadratic objective")
    _check_expected_signature(es, required_es_level(spec.level_l, spec.impact))
    basis = list(basis)
    for word in basis:
        if len(word) > spec.level_l:
            raise InvalidParameterError(f"basis word {word} is longer than level_l={spec.level_l}")

    g0, linear = _affine_impact(spec.impact)
    q0 = spec.q0
    penalty_tail = spec.phi * TIME + spec.alpha * UNIT
    words = [TensorFunctional({word: 1.0}, DIMENSION) for word in basis]
    shifted = [concat(w, TIME) for w in words]
    impacts = [linear(w) for w in words]

    n = len(basis)
    B = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            # quadratic part of C at ℓ = x_i u_i + x_j u_j, coefficient of x_i x_j
            term = (-concat(shuffle(impacts[i], words[j]), TIME)
                    - concat(shuffle(shifted[i], shifted[j]), penalty_tail)
                    + shuffle(shifted[i], impacts[j]))
            B[i, j] = pair(term, es)
    A = B + B.T

    base_price = PRICE - g0
    b = np.empty(n)
    for i in range(n):
        term = (concat(shuffle(base_price, words[i]), TIME)
                + 2.0 * q0 * concat(shifted[i], penalty_tail)
                - q0 * impacts[i]
                - shuffle(shifted[i], base_price))
        b[i] = pair(term, es)

    c = pair(-(q0 ** 2) * penalty_tail + q0 * base_price, es)
    logger.debug(f"Assembled quadratic objective on {n} words (M={spec.level_l}, N={es.level})")
    return A, b, float(c)


def quadratic_value(x: np.ndarray, quadratic: Tuple[np.ndarray, np.ndarray, float]) -> float:
    A, b, c = quadratic
    return float(0.5 * x @ A @ x + b @ x + c)
