"""Jones-calculus model of the polarization interferometer.

Conventions
-----------
* Jones vectors are (H, V) amplitudes. Angles are fast-axis orientations
  in degrees from horizontal; phases are radians.
* HWP(a) = [[cos 2a, sin 2a], [sin 2a, -cos 2a]].
* QWP(a) = Rot(-a) diag(1, -i) Rot(a): the slow axis is retarded by
  e^{-i pi/2}.
* |R> = (|H> - i|V>)/sqrt2, |L> = (|H> + i|V>)/sqrt2. The logical qubit
  basis is |0> = |R>, |1> = -i|L>; with this phase choice the preparation
  waveplates produce the symmetric states with the intended phases.
* Four-mode amplitudes are ordered (A.H, A.V, B.H, B.V). The input beam
  enters arm A; arm B starts in vacuum. Every PBS transmits H within its
  arm and reflects V across arms.

Beam path of the measurement network::

    QWP2 -> HWP4 -> PBS2 -+- arm A: HWP6, M1 phase -+- PBS3 -+- arm A: HWP7 -> PBS4 (T: PD?, R: PD0)
                          +- arm B: HWP5 ----------+        +- arm B: QWP3 -> PBS5 (T: PD2, R: PD1)

PBS4 and PBS5 are taken as ideal and folded into the detector map
``DETECTOR_MODES``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .qstate import INCONCLUSIVE, OutcomeNeverOccursError
from .strategies import (
    as_params,
    confidence_from_normalized_voltages,
    outcome_probability_matrix,
    symmetric_states,
    trine_max_confidence_povm,
)

AH, AV, BH, BV = range(4)
ARMS = {"A": 0, "B": 2}

H_KET = np.array([1.0, 0.0], dtype=complex)
V_KET = np.array([0.0, 1.0], dtype=complex)
R_KET = np.array([1.0, -1j]) / np.sqrt(2)
L_KET = np.array([1.0, 1j]) / np.sqrt(2)
LOGICAL_KETS = (R_KET, -1j * L_KET)

# detector -> output mode, within-arm port assignment fixed to reproduce the reference angles with positive values
DETECTOR_MODES = {"pd0": AV, "pd1": BV, "pd2": BH, "pdq": AH}
# outcome column order used throughout: omega_0, omega_1, omega_2, omega_?
OUTCOME_DETECTORS = ("pd0", "pd1", "pd2", "pdq")

MAX_LEAK = 0.05
NOMINAL_LEAK = 0.005
DEFAULT_LEAK_PHASES = tuple(float(p) for p in np.linspace(-np.pi / 4, np.pi / 4, 9))
PREP_PHASES_DEG = (0.0, 120.0, -120.0)

# printed fast-axis angles (degrees) of HWP4, HWP5, HWP6, HWP7 per theta
REFERENCE_ANGLES = {
    0: (0.0, 27.4, 0.0, 0.0),
    5: (1.3, 27.4, 1.8, 2.2),
    10: (2.6, 27.5, 3.6, 4.4),
    15: (4.0, 27.8, 5.4, 6.9),
    20: (5.7, 28.1, 7.3, 9.7),
    25: (7.7, 28.7, 9.3, 12.9),
    30: (10.2, 29.6, 11.4, 17.0),
    35: (13.5, 31.2, 13.6, 22.2),
    40: (17.6, 34.2, 15.7, 29.3),
    45: (22.5, 45.0, 17.6, 45.0),
}
TABLE_TOLERANCE_DEG = 0.2
SOLVER_TOL = 1e-8
MAX_CONTINUATION_STEP = 5.0


def _rot(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s], [-s, c]])


def hwp_matrix(angle: float) -> np.ndarray:
    a = 2 * np.deg2rad(angle)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp_matrix(angle: float) -> np.ndarray:
    a = np.deg2rad(angle)
    return _rot(-a) @ np.diag([1.0, -1j]) @ _rot(a)


def embed(m2: np.ndarray, arm: str) -> np.ndarray:
    """Lift a 2x2 polarization matrix acting on one arm to the four-mode space."""
    u = np.eye(4, dtype=complex)
    i = ARMS[arm]
    u[i : i + 2, i : i + 2] = m2
    return u


def pbs_scatter(leak_intensity: float = 0.0, leak_phase: float = 0.0) -> np.ndarray:
    """Four-mode transfer of a polarizing beamsplitter.

    A fraction ``leak_intensity`` of each input's power goes to the wrong
    port with relative phase ``leak_phase``. All coefficients are real at
    zero phase and the matrix is unitary for any leak.
    """
    if not 0.0 <= leak_intensity <= MAX_LEAK:
        raise ValueError(f"leak_intensity must lie in [0, {MAX_LEAK}], got {leak_intensity!r}")
    t = np.sqrt(1.0 - leak_intensity)
    r = np.sqrt(leak_intensity)
    e = np.exp(1j * leak_phase)
    u = np.zeros((4, 4), dtype=complex)
    u[np.ix_([AH, BH], [AH, BH])] = [[t, -r * e.conjugate()], [r * e, t]]
    u[np.ix_([AV, BV], [AV, BV])] = [[r * e, -t], [t, r * e.conjugate()]]
    return u


@dataclass(frozen=True)
class Waveplate:
    kind: str  # "HWP" or "QWP"
    angle: float
    arm: str = "A"
    name: str = ""

    def jones(self) -> np.ndarray:
        if self.kind == "HWP":
            return hwp_matrix(self.angle)
        if self.kind == "QWP":
            return qwp_matrix(self.angle)
        raise ValueError(f"unknown waveplate kind {self.kind!r}")

    def transfer(self) -> np.ndarray:
        return embed(self.jones(), self.arm)


@dataclass(frozen=True)
class PolarizingBeamSplitter:
    leak_intensity: float = 0.0
    leak_phase: float = 0.0
    name: str = ""

    def transfer(self) -> np.ndarray:
        return pbs_scatter(self.leak_intensity, self.leak_phase)


@dataclass(frozen=True)
class ArmPhase:
    delta: float
    arm: str = "A"
    name: str = ""

    def transfer(self) -> np.ndarray:
        return embed(np.exp(1j * self.delta) * np.eye(2), self.arm)


@dataclass(frozen=True)
class OpticalNetwork:
    elements: tuple

    def transfer(self) -> np.ndarray:
        u = np.eye(4, dtype=complex)
        for el in self.elements:
            u = el.transfer() @ u
        return u

    def propagate(self, modes: np.ndarray) -> np.ndarray:
        return self.transfer() @ np.asarray(modes, dtype=complex)

    def element(self, name: str):
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)


@dataclass(frozen=True)
class MeasurementSettings:
    """Measurement-stage waveplate angles (degrees) and M1 phase (radians)."""

    hwp4: float
    hwp5: float
    hwp6: float
    hwp7: float
    interferometer_phase: float = 0.0
    qwp2: float = 45.0
    qwp3: float = 45.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.hwp4, self.hwp5, self.hwp6, self.hwp7, self.interferometer_phase])

    @classmethod
    def from_vector(cls, x: Sequence[float], **kw) -> "MeasurementSettings":
        return cls(*(float(v) for v in x[:5]), **kw)

    def hwp_angles(self) -> tuple[float, float, float, float]:
        return (self.hwp4, self.hwp5, self.hwp6, self.hwp7)


@dataclass(frozen=True)
class DetectorIntensities:
    pd0: float
    pd1: float
    pd2: float
    pdq: float

    def as_array(self) -> np.ndarray:
        """Intensities in outcome order (omega_0, omega_1, omega_2, omega_?)."""
        return np.array([self.pd0, self.pd1, self.pd2, self.pdq])

    def total(self) -> float:
        return float(self.as_array().sum())


def preparation_elements(theta, which: int) -> list[Waveplate]:
    """HWP2 -> QWP1 -> HWP3 in beam order."""
    t = as_params(theta).theta
    phi = PREP_PHASES_DEG[which]
    return [
        Waveplate("HWP", t / 2 - 45.0, name="HWP2"),
        Waveplate("QWP", -45.0, name="QWP1"),
        Waveplate("HWP", -phi / 4, name="HWP3"),
    ]


def prepare_input(theta, which: int) -> np.ndarray:
    """Jones vector leaving the preparation stage for input state ``which``."""
    if which not in (0, 1, 2):
        raise ValueError(f"state index must be 0, 1 or 2, got {which!r}")
    v = H_KET.copy()
    for wp in preparation_elements(theta, which):
        v = wp.jones() @ v
    return v


def logical_amplitudes(jones: np.ndarray) -> np.ndarray:
    """(<0|v>, <1|v>) in the circular logical basis."""
    return np.array([np.vdot(k, jones) for k in LOGICAL_KETS])


def build_measurement_network(
    settings: MeasurementSettings, leak_intensity: float = 0.0, leak_phase: float = 0.0
) -> OpticalNetwork:
    """Ordered element list for the measurement stage; leaks apply to PBS2 and PBS3."""
    return OpticalNetwork(
        (
            Waveplate("QWP", settings.qwp2, "A", "QWP2"),
            Waveplate("HWP", settings.hwp4, "A", "HWP4"),
            PolarizingBeamSplitter(leak_intensity, leak_phase, "PBS2"),
            Waveplate("HWP", settings.hwp6, "A", "HWP6"),
            Waveplate("HWP", settings.hwp5, "B", "HWP5"),
            ArmPhase(settings.interferometer_phase, "A", "M1"),
            PolarizingBeamSplitter(leak_intensity, leak_phase, "PBS3"),
            Waveplate("HWP", settings.hwp7, "A", "HWP7"),
            Waveplate("QWP", settings.qwp3, "B", "QWP3"),
        )
    )


def input_modes(jones: np.ndarray) -> np.ndarray:
    v = np.zeros(4, dtype=complex)
    v[AH], v[AV] = jones
    return v


def _intensities(transfer: np.ndarray, jones: np.ndarray) -> np.ndarray:
    out = np.abs(transfer @ input_modes(jones)) ** 2
    return np.array([out[DETECTOR_MODES[d]] for d in OUTCOME_DETECTORS])


def detector_intensities(network: OpticalNetwork, jones: np.ndarray) -> DetectorIntensities:
    return DetectorIntensities(*(float(x) for x in _intensities(network.transfer(), jones)))


def network_probability_matrix(
    settings: MeasurementSettings, theta, leak_intensity: float = 0.0, leak_phase: float = 0.0
) -> np.ndarray:
    """3x4 detector probabilities: rows prepared inputs, columns (PD0, PD1, PD2, PD?)."""
    u = build_measurement_network(settings, leak_intensity, leak_phase).transfer()
    return np.array([_intensities(u, prepare_input(theta, k)) for k in range(3)])


def povm_probability_matrix(theta) -> np.ndarray:
    """Ideal Tr(rho_i Pi_j), columns (omega_0, omega_1, omega_2, omega_?)."""
    m = outcome_probability_matrix(symmetric_states(theta), trine_max_confidence_povm(theta))
    return np.column_stack([m.column(j) for j in (0, 1, 2, INCONCLUSIVE)])


def network_residual(settings: MeasurementSettings, theta) -> float:
    return float(np.max(np.abs(network_probability_matrix(settings, theta) - povm_probability_matrix(theta))))


# ---------------------------------------------------------------- solving


class SolverError(RuntimeError):
    def __init__(self, theta: float, residual: float, settings: MeasurementSettings | None = None):
        super().__init__(f"angle solve failed at theta={theta:g} deg: best residual {residual:.3e}")
        self.theta = theta
        self.residual = residual
        self.settings = settings


def theta0_seed() -> MeasurementSettings:
    """Analytic settings at theta = 0: all light routed to PD?.

    HWP5 sees no light at theta = 0; it is set to its small-theta limit,
    where the reflected arm must send 1/3 of its power towards PD0.
    """
    return MeasurementSettings(0.0, 0.5 * float(np.rad2deg(np.arccos(1 / np.sqrt(3)))), 0.0, 0.0, 0.0)


def _fit(theta: float, x0: np.ndarray):
    target = povm_probability_matrix(theta).ravel()

    def residuals(x):
        return network_probability_matrix(MeasurementSettings.from_vector(x), theta).ravel() - target

    res = least_squares(residuals, x0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
    return res.x, float(np.max(np.abs(res.fun)))


def _retry_seeds(x0: np.ndarray):
    yield x0
    for dphase in (np.pi / 2, np.pi, -np.pi / 2):
        yield x0 + np.array([0, 0, 0, 0, dphase])
    for nudge in (1.0, -1.0, 3.0, -3.0):
        yield x0 + np.array([nudge, nudge, nudge, nudge, 0.0])


def _solve_one(theta: float, seed: MeasurementSettings) -> MeasurementSettings:
    best_x, best_r = seed.as_vector(), np.inf
    for x0 in _retry_seeds(seed.as_vector()):
        x, r = _fit(theta, x0)
        if r < best_r:
            best_x, best_r = x, r
        if r < SOLVER_TOL:
            break
    settings = MeasurementSettings.from_vector(best_x, qwp2=seed.qwp2, qwp3=seed.qwp3)
    if best_r >= SOLVER_TOL:
        raise SolverError(theta, best_r, settings)
    return settings


def _continuation(start: float, stop: float) -> list[float]:
    n = max(1, int(np.ceil((stop - start) / MAX_CONTINUATION_STEP - 1e-9)))
    return [start + (stop - start) * k / n for k in range(1, n + 1)]


@functools.lru_cache(maxsize=64)
def _solve_sorted(thetas: tuple[float, ...]) -> tuple[MeasurementSettings, ...]:
    current_theta, current = 0.0, theta0_seed()
    out = []
    for t in thetas:
        if t > current_theta:
            for step in _continuation(current_theta, t):
                current = _solve_one(step, current)
            current_theta = t
        elif t == 0.0:
            current = _solve_one(0.0, current)
        out.append(current)
    return tuple(out)


def solve_grid(thetas: Iterable) -> list[MeasurementSettings]:
    """Solve a list of theta values by continuation from the theta = 0 seed.

    Results come back in input order and in canonical form.
    """
    values = [as_params(t).theta for t in thetas]
    if not values:
        return []
    ordered = tuple(sorted(set(values)))
    solved = dict(zip(ordered, _solve_sorted(ordered)))
    return [canonical_settings(solved[v]) for v in values]


def solve_measurement_angles(theta, seed: MeasurementSettings | None = None) -> MeasurementSettings:
    """Waveplate settings whose ideal network realizes the maximum-confidence POVM.

    Without a seed the solve continues from the analytic theta = 0 point in
    steps of at most 5 degrees. Raises ``SolverError`` if the probability
    residual cannot be brought below 1e-8.
    """
    t = as_params(theta).theta
    if seed is None:
        return solve_grid([t])[0]
    return canonical_settings(_solve_one(t, seed))


def reduce_angle(angle: float, period: float = 90.0) -> float:
    """Representative of ``angle`` modulo ``period`` in (-period/2, period/2]."""
    r = float(np.mod(angle, period))
    if r > period / 2 + 1e-9:
        r -= period
    return r


def wrap_phase(phase: float) -> float:
    p = float(np.mod(phase + np.pi, 2 * np.pi) - np.pi)
    return np.pi if p <= -np.pi + 1e-12 else p


def canonical_settings(s: MeasurementSettings) -> MeasurementSettings:
    """Reduce angles into (-45, 45] without changing any detector intensity.

    HWP(a + 90) = -HWP(a). The sign is global for HWP4 and HWP7, but inside
    the interferometer it flips one arm, so each odd shift of HWP5 or HWP6
    is compensated by pi on the M1 phase.
    """
    phase = s.interferometer_phase
    reduced = {}
    for name in ("hwp5", "hwp6"):
        a = getattr(s, name)
        r = reduce_angle(a)
        if int(round((a - r) / 90.0)) % 2:
            phase += np.pi
        reduced[name] = r
    return replace(
        s,
        hwp4=reduce_angle(s.hwp4),
        hwp7=reduce_angle(s.hwp7),
        interferometer_phase=wrap_phase(phase),
        qwp2=reduce_angle(s.qwp2, 180.0),
        qwp3=reduce_angle(s.qwp3, 180.0),
        **reduced,
    )


def angle_deviation(solved: float, printed: float, period: float = 90.0) -> float:
    """|solved - printed| after reduction modulo the waveplate period."""
    return abs(reduce_angle(solved - printed, period))


def table_deviation(settings: MeasurementSettings, theta) -> tuple[float, ...] | None:
    """Per-waveplate deviation of HWP4..HWP7 from the reference angles, or None off-table."""
    t = as_params(theta).theta
    key = int(round(t))
    if abs(t - key) > 1e-9 or key not in REFERENCE_ANGLES:
        return None
    return tuple(angle_deviation(a, b) for a, b in zip(settings.hwp_angles(), REFERENCE_ANGLES[key]))


# ---------------------------------------------------------- non-ideal model


@dataclass(frozen=True)
class NonidealBand:
    """Envelopes over the leak-phase grid.

    ``intensities[p, i, k]`` is detector k (PD0, PD1, PD2, PD?) for input i
    at leak phase p; ``confidences[p, k]`` is the confidence of detector k.
    Confidences are NaN where the detector never fires.
    """

    theta: float
    leak_intensity: float
    leak_phases: tuple[float, ...]
    settings: MeasurementSettings
    intensities: np.ndarray = field(repr=False)
    confidences: np.ndarray = field(repr=False)

    @property
    def intensity_lo(self) -> np.ndarray:
        return self.intensities.min(axis=0)

    @property
    def intensity_hi(self) -> np.ndarray:
        return self.intensities.max(axis=0)

    @property
    def confidence_lo(self) -> np.ndarray:
        return self.confidences.min(axis=0)

    @property
    def confidence_hi(self) -> np.ndarray:
        return self.confidences.max(axis=0)

    def at_phase(self, phase: float) -> tuple[np.ndarray, np.ndarray]:
        i = int(np.argmin(np.abs(np.asarray(self.leak_phases) - phase)))
        if abs(self.leak_phases[i] - phase) > 1e-12:
            raise KeyError(f"phase {phase} not on the grid")
        return self.intensities[i], self.confidences[i]


def detector_confidences(probs: np.ndarray) -> np.ndarray:
    """Confidence of PD0..PD2 from a 3x4 normalized detector matrix."""
    out = np.full(3, np.nan)
    for k in range(3):
        try:
            out[k] = confidence_from_normalized_voltages(probs[:, k], detector=k)
        except OutcomeNeverOccursError:
            pass
    return out


def nonideal_band(
    theta,
    leak_intensity: float = NOMINAL_LEAK,
    phase_grid: Sequence[float] = DEFAULT_LEAK_PHASES,
    settings: MeasurementSettings | None = None,
) -> NonidealBand:
    t = as_params(theta).theta
    if settings is None:
        settings = solve_measurement_angles(t)
    phases = tuple(float(p) for p in phase_grid)
    if not phases:
        raise ValueError("leak phase grid is empty")
    inten = np.array([network_probability_matrix(settings, t, leak_intensity, p) for p in phases])
    conf = np.array([detector_confidences(m) for m in inten])
    return NonidealBand(t, float(leak_intensity), phases, settings, inten, conf)
