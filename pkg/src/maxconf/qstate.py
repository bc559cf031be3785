"""Qubit states, operators and measurement primitives.

Everything here is two-dimensional and exact up to double precision: pure
states are complex 2-vectors, operators are 2x2 complex matrices, and a
POVM is an ordered list of labelled positive operators.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-10
NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10

INCONCLUSIVE = "?"
# total probability below which an outcome is treated as never occurring
NEVER_FIRES = 1e-15


class OutcomeNeverOccursError(ValueError):
    """Raised when a posterior is requested for an outcome with zero probability."""


@dataclass(frozen=True, eq=False)
class PureQubit:
    """Pure qubit state amp0|0> + amp1|1>.

    Equality is phase-insensitive: two states compare equal when
    |<a|b>| = 1 within 1e-12.
    """

    amp0: complex
    amp1: complex

    @classmethod
    def normalized(cls, amp0: complex, amp1: complex) -> "PureQubit":
        norm = np.hypot(abs(amp0), abs(amp1))
        if norm == 0 or not np.isfinite(norm):
            raise ValueError("cannot normalize a zero or non-finite vector")
        return cls(complex(amp0) / norm, complex(amp1) / norm)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp0, self.amp1], dtype=complex)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def overlap(self, other: "PureQubit") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.vector, other.vector))

    def projector(self) -> "QubitOperator":
        v = self.vector
        return QubitOperator(np.outer(v, v.conj()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PureQubit):
            return NotImplemented
        return abs(abs(self.overlap(other)) - 1.0) <= NORM_TOL

    __hash__ = None  # type: ignore[assignment]


class QubitOperator:
    """A 2x2 complex matrix; immutable once built."""

    __slots__ = ("_m",)

    def __init__(self, entries):
        m = np.array(entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("operator entries must be finite")
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @classmethod
    def identity(cls) -> "QubitOperator":
        return cls(np.eye(2))

    @classmethod
    def zero(cls) -> "QubitOperator":
        return cls(np.zeros((2, 2)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self._m - self._m.conj().T)))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues of the Hermitian part."""
        h = 0.5 * (self._m + self._m.conj().T)
        return np.linalg.eigvalsh(h)

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        return self.is_hermitian() and self.eigenvalues()[0] >= -tol

    def trace(self) -> complex:
        return complex(np.trace(self._m))

    def dagger(self) -> "QubitOperator":
        return QubitOperator(self._m.conj().T)

    def __add__(self, other: "QubitOperator") -> "QubitOperator":
        return QubitOperator(self._m + _mat(other))

    def __sub__(self, other: "QubitOperator") -> "QubitOperator":
        return QubitOperator(self._m - _mat(other))

    def __mul__(self, scalar: complex) -> "QubitOperator":
        return QubitOperator(self._m * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "QubitOperator") -> "QubitOperator":
        return QubitOperator(self._m @ _mat(other))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self._m, _mat(other), rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return f"QubitOperator({self._m.tolist()!r})"


def _mat(op) -> np.ndarray:
    if isinstance(op, QubitOperator):
        return op.matrix
    return np.asarray(op, dtype=complex)


def as_operator(op) -> QubitOperator:
    return op if isinstance(op, QubitOperator) else QubitOperator(op)


@dataclass(frozen=True)
class Ensemble:
    """Prior-weighted pure states to be discriminated."""

    states: tuple[PureQubit, ...]
    priors: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "priors", tuple(float(p) for p in self.priors))
        if len(self.states) == 0:
            raise ValueError("ensemble needs at least one state")
        if len(self.states) != len(self.priors):
            raise ValueError("states and priors differ in length")
        if any(p < 0 for p in self.priors):
            raise ValueError("priors must be nonnegative")
        if abs(sum(self.priors) - 1.0) > NORM_TOL:
            raise ValueError(f"priors sum to {sum(self.priors)!r}, not 1")
        for s in self.states:
            if abs(s.norm() - 1.0) > NORM_TOL:
                raise ValueError("ensemble states must be normalized")

    @classmethod
    def equiprobable(cls, states: Sequence[PureQubit]) -> "Ensemble":
        n = len(states)
        return cls(tuple(states), tuple([1.0 / n] * n))

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class Povm:
    """Ordered, labelled measurement elements.

    Conclusive outcomes are labelled by the index of the state they
    identify; the inconclusive outcome carries the label ``INCONCLUSIVE``.
    Validity is not enforced at construction so that broken measurements
    can still be inspected with :func:`povm_validate`.
    """

    elements: tuple[tuple[object, QubitOperator], ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        elems = tuple((label, as_operator(op)) for label, op in self.elements)
        labels = [label for label, _ in elems]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate outcome labels: {labels}")
        object.__setattr__(self, "elements", elems)

    @property
    def labels(self) -> list:
        return [label for label, _ in self.elements]

    @property
    def operators(self) -> list[QubitOperator]:
        return [op for _, op in self.elements]

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, label) -> QubitOperator:
        for lab, op in self.elements:
            if lab == label:
                return op
        raise KeyError(label)

    def __contains__(self, label) -> bool:
        return label in self.labels

    def conclusive_labels(self) -> list:
        return [lab for lab in self.labels if lab != INCONCLUSIVE]

    def replace(self, label, op) -> "Povm":
        """Copy with the element for ``label`` swapped out."""
        return Povm(tuple((lab, op if lab == label else old) for lab, old in self.elements), self.name)


@dataclass(frozen=True)
class PovmReport:
    max_negative_eigenvalue: float
    completeness_error: float
    hermiticity_error: float
    element_sum: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return (
            self.max_negative_eigenvalue <= PSD_TOL
            and self.completeness_error <= COMPLETENESS_TOL
            and self.hermiticity_error <= HERMITIAN_TOL
        )

    def __bool__(self) -> bool:
        return self.passed


def check_density(rho, tol: float = HERMITIAN_TOL) -> QubitOperator:
    rho = as_operator(rho)
    if not rho.is_hermitian(tol):
        raise ValueError(f"density operator not Hermitian (error {rho.hermiticity_error():.3g})")
    if abs(rho.trace() - 1.0) > tol:
        raise ValueError(f"density operator trace {rho.trace():.12g} != 1")
    if rho.eigenvalues()[0] < -PSD_TOL:
        raise ValueError("density operator is not positive semidefinite")
    return rho


def born_probability(state, element) -> float:
    """Tr(rho Pi) for a density operator and a POVM element.

    Results within 1e-10 outside [0, 1] are clamped; anything further out
    signals an invalid input and raises.
    """
    rho = check_density(state)
    pi = as_operator(element)
    if not pi.is_hermitian():
        raise ValueError(f"POVM element not Hermitian (error {pi.hermiticity_error():.3g})")
    if pi.eigenvalues()[0] < -PSD_TOL:
        raise ValueError("POVM element is not positive semidefinite")
    p = float(np.real(np.trace(rho.matrix @ pi.matrix)))
    if p < -PSD_TOL or p > 1.0 + PSD_TOL:
        raise ValueError(f"probability {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def density_from_ensemble(ensemble: Ensemble) -> QubitOperator:
    """rho = sum_i p_i |psi_i><psi_i|."""
    m = np.zeros((2, 2), dtype=complex)
    for p, s in zip(ensemble.priors, ensemble.states):
        v = s.vector
        m += p * np.outer(v, v.conj())
    # exact Hermitian symmetrisation; removes last-bit asymmetry
    return QubitOperator(0.5 * (m + m.conj().T))


def posterior_confidence(ensemble: Ensemble, povm: Povm, outcome_index: int) -> float:
    """P(rho_j | omega_j) = p_j Tr(rho_j Pi_j) / Tr(rho Pi_j)."""
    if outcome_index == INCONCLUSIVE:
        raise ValueError("the inconclusive outcome does not identify a state")
    if not 0 <= outcome_index < len(ensemble):
        raise IndexError(f"outcome {outcome_index} has no matching state")
    pi = povm[outcome_index]
    rho = density_from_ensemble(ensemble)
    total = born_probability(rho, pi)
    if total <= NEVER_FIRES:
        raise OutcomeNeverOccursError(f"outcome {outcome_index} never occurs (P = {total:.3g})")
    joint = ensemble.priors[outcome_index] * born_probability(
        ensemble.states[outcome_index].projector(), pi
    )
    return min(max(joint / total, 0.0), 1.0)


def _hermitian_eig(op) -> tuple[np.ndarray, np.ndarray]:
    op = as_operator(op)
    if not op.is_hermitian():
        raise ValueError(f"operator not Hermitian (error {op.hermiticity_error():.3g})")
    m = op.matrix
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def support_function(op, fn) -> QubitOperator:
    """Apply ``fn`` to the eigenvalues above 1e-10, zero elsewhere."""
    w, v = _hermitian_eig(op)
    if w[0] < -PSD_TOL:
        raise ValueError("operator is not positive semidefinite")
    f = np.where(w > PSD_TOL, fn(np.where(w > PSD_TOL, w, 1.0)), 0.0)
    return QubitOperator((v * f) @ v.conj().T)


def support_inverse(op) -> QubitOperator:
    """Moore-Penrose inverse of a Hermitian PSD operator on its support."""
    return support_function(op, lambda w: 1.0 / w)


def support_projector(op) -> QubitOperator:
    return support_function(op, np.ones_like)


def povm_validate(povm: Povm | Iterable) -> PovmReport:
    """Positivity and completeness report; never raises on a bad POVM."""
    ops = povm.operators if isinstance(povm, Povm) else [as_operator(o) for o in povm]
    worst = 0.0
    herm_worst = 0.0
    total = np.zeros((2, 2), dtype=complex)
    for op in ops:
        m = op.matrix
        herm = float(np.max(np.abs(m - m.conj().T)))
        lo = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
        worst = max(worst, -lo)
        herm_worst = max(herm_worst, herm)
        total = total + m
    dev = float(np.max(np.abs(total - np.eye(2))))
    return PovmReport(
        max_negative_eigenvalue=worst,
        completeness_error=dev,
        hermiticity_error=herm_worst,
        element_sum=total,
    )
