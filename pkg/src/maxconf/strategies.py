"""Maximum-confidence and minimum-error measurements for qubit ensembles."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .qstate import (
    INCONCLUSIVE,
    NEVER_FIRES,
    NORM_TOL,
    PSD_TOL,
    Ensemble,
    OutcomeNeverOccursError,
    Povm,
    PureQubit,
    QubitOperator,
    born_probability,
    density_from_ensemble,
    posterior_confidence,
    povm_validate,
    support_function,
    support_inverse,
    support_projector,
)

MAX_CONFIDENCE = "max_confidence"
MIN_ERROR = "min_error"
STRATEGIES = (MAX_CONFIDENCE, MIN_ERROR)

# azimuthal phases of the three symmetric states, in state-index order
TRINE_PHASES = (0.0, 2 * np.pi / 3, -2 * np.pi / 3)


@dataclass(frozen=True)
class TrineParams:
    """Polar angle (degrees) of the three symmetric states, 0 <= theta <= 45."""

    theta: float

    def __post_init__(self):
        t = float(self.theta)
        if not np.isfinite(t) or t < 0.0 or t > 45.0:
            raise ValueError(f"theta must lie in [0, 45] degrees, got {self.theta!r}")
        object.__setattr__(self, "theta", t)

    @property
    def radians(self) -> float:
        return float(np.deg2rad(self.theta))


def as_params(theta) -> TrineParams:
    return theta if isinstance(theta, TrineParams) else TrineParams(theta)


@dataclass(frozen=True)
class OutcomeProbabilityMatrix:
    """P(outcome j | input i); rows are inputs, columns POVM outcomes."""

    values: np.ndarray
    row_labels: tuple
    col_labels: tuple

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))

    def column(self, label) -> np.ndarray:
        return self.values[:, self.col_labels.index(label)]

    def row_sum_error(self) -> float:
        return float(np.max(np.abs(self.values.sum(axis=1) - 1.0)))


@dataclass(frozen=True)
class StrategyReport:
    strategy_name: str
    theta: float | None
    povm: Povm
    probabilities: OutcomeProbabilityMatrix
    confidence_per_outcome: tuple  # float, or None where the outcome never occurs
    inconclusive_probability: float


def symmetric_states(params) -> Ensemble:
    """cos(t)|0> + e^{i phi_k} sin(t)|1> for phi_k = 0, +2pi/3, -2pi/3, equal priors."""
    t = as_params(params).radians
    c, s = np.cos(t), np.sin(t)
    states = [PureQubit(complex(c), complex(np.exp(1j * ph) * s)) for ph in TRINE_PHASES]
    return Ensemble.equiprobable(states)


def max_confidence_direction(ensemble: Ensemble, state_index: int) -> QubitOperator:
    """Unnormalised maximum-confidence element rho^+ |psi_j><psi_j| rho^+.

    The scale is left to the caller. A state with weight outside the
    support of rho cannot happen for a pure-state ensemble, but a state with
    zero prior has no defined confidence and is rejected.
    """
    if ensemble.priors[state_index] <= 0:
        raise ValueError(f"state {state_index} has zero prior; confidence undefined")
    rho = density_from_ensemble(ensemble)
    proj = support_projector(rho).matrix
    v = ensemble.states[state_index].vector
    if np.linalg.norm(v - proj @ v) > 1e-10:
        raise ValueError(f"state {state_index} lies outside the support of rho")
    rinv = support_inverse(rho).matrix
    w = rinv @ v
    return QubitOperator(np.outer(w, w.conj()))


def trine_max_confidence_povm(params) -> Povm:
    """Four-outcome maximum-confidence measurement for the symmetric states.

    Conclusive elements (3 cos^2 t)^-1 |phi_k><phi_k| with
    |phi_k> = sin(t)|0> + e^{i phi_k} cos(t)|1>, completed by the
    inconclusive element (1 - tan^2 t)|0><0|.
    """
    t = as_params(params).radians
    c, s = np.cos(t), np.sin(t)
    weight = 1.0 / (3.0 * c * c)
    elements = []
    for k, ph in enumerate(TRINE_PHASES):
        phi = np.array([s, np.exp(1j * ph) * c])
        elements.append((k, QubitOperator(weight * np.outer(phi, phi.conj()))))
    p0 = np.diag([1.0 - np.tan(t) ** 2, 0.0])
    elements.append((INCONCLUSIVE, QubitOperator(p0)))
    return Povm(tuple(elements), name=MAX_CONFIDENCE)


def _gram(ensemble: Ensemble) -> np.ndarray:
    vs = np.array([s.vector for s in ensemble.states])
    return vs.conj() @ vs.T


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.where(w > PSD_TOL, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def min_error_srm(ensemble: Ensemble, tol: float = 1e-9) -> Povm:
    """Square-root measurement p_j rho^-1/2 |psi_j><psi_j| rho^-1/2.

    Only accepted where it is the minimum-error measurement we compare
    against: equal priors and a Gram-matrix square root with constant
    diagonal (true for every symmetric ensemble). On a rank-deficient rho
    the kernel projector is shared equally so the elements stay complete.
    """
    n = len(ensemble)
    if max(ensemble.priors) - min(ensemble.priors) > NORM_TOL:
        raise ValueError("square-root measurement comparison needs equal priors")
    diag = np.real(np.diag(_psd_sqrt(_gram(ensemble))))
    if np.ptp(diag) > tol:
        raise ValueError("ensemble is not symmetric; square-root measurement is not minimum-error")
    rho = density_from_ensemble(ensemble)
    r = support_function(rho, lambda w: w ** -0.5).matrix
    kernel = np.eye(2) - support_projector(rho).matrix
    elements = []
    for j, (p, s) in enumerate(zip(ensemble.priors, ensemble.states)):
        w = r @ s.vector
        m = p * np.outer(w, w.conj()) + kernel / n
        elements.append((j, QubitOperator(0.5 * (m + m.conj().T))))
    return Povm(tuple(elements), name=MIN_ERROR)


def outcome_probability_matrix(ensemble: Ensemble, povm: Povm) -> OutcomeProbabilityMatrix:
    """Entry (i, j) = Tr(rho_i Pi_j)."""
    rows = []
    for s in ensemble.states:
        rho_i = s.projector()
        rows.append([born_probability(rho_i, op) for op in povm.operators])
    return OutcomeProbabilityMatrix(np.array(rows), tuple(range(len(ensemble))), tuple(povm.labels))


def success_probability(ensemble: Ensemble, povm: Povm) -> float:
    """sum_j p_j Tr(rho_j Pi_j) over conclusive outcomes."""
    total = 0.0
    for j in povm.conclusive_labels():
        total += ensemble.priors[j] * born_probability(ensemble.states[j].projector(), povm[j])
    return total


def confidences(ensemble: Ensemble, povm: Povm) -> tuple:
    out = []
    for j in povm.conclusive_labels():
        try:
            out.append(posterior_confidence(ensemble, povm, j))
        except OutcomeNeverOccursError:
            out.append(None)
    return tuple(out)


def build_povm(strategy: str, params) -> Povm:
    if strategy == MAX_CONFIDENCE:
        return trine_max_confidence_povm(params)
    if strategy == MIN_ERROR:
        return min_error_srm(symmetric_states(params))
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


def strategy_report(params, strategy: str) -> StrategyReport:
    params = as_params(params)
    ensemble = symmetric_states(params)
    povm = build_povm(strategy, params)
    report = povm_validate(povm)
    if not report:
        raise ValueError(f"{strategy} POVM at theta={params.theta} failed validation: {report}")
    probs = outcome_probability_matrix(ensemble, povm)
    p_inc = 0.0
    if INCONCLUSIVE in povm:
        p_inc = born_probability(density_from_ensemble(ensemble), povm[INCONCLUSIVE])
    return StrategyReport(
        strategy_name=strategy,
        theta=params.theta,
        povm=povm,
        probabilities=probs,
        confidence_per_outcome=confidences(ensemble, povm),
        inconclusive_probability=p_inc,
    )


def strategy_sweep(theta_grid: Iterable, strategy: str) -> list[StrategyReport]:
    return [strategy_report(t, strategy) for t in theta_grid]


def confidence_from_normalized_voltages(voltages: Sequence[float], detector: int = 0) -> float:
    """Fraction of the signal at ``detector`` caused by its own input state.

    ``voltages[i]`` is the normalized reading at this detector when state i
    was sent. A total at round-off level (<= 1e-15) counts as never firing.
    """
    v = np.asarray(voltages, dtype=float)
    if np.any(v < 0):
        raise ValueError("normalized voltages must be nonnegative")
    total = float(v.sum())
    if total <= NEVER_FIRES:
        raise OutcomeNeverOccursError(f"detector {detector} never fires")
    return float(v[detector] / total)
