"""Invariant and reproduction checks behind ``maxconf verify``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import optics
from .qstate import INCONCLUSIVE, Povm, povm_validate
from .strategies import (
    confidences,
    min_error_srm,
    outcome_probability_matrix,
    symmetric_states,
    trine_max_confidence_povm,
)

TWO_THIRDS = 2.0 / 3.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{tag}] {self.name}: measured={self.measured:.3e} tol={self.tolerance:.1e}{extra}"


def default_grid(step: float = 5.0, start: float = 0.0, end: float = 45.0) -> list[float]:
    n = int(round((end - start) / step))
    grid = [round(start + k * step, 9) for k in range(n + 1)]
    return [t for t in grid if t <= end + 1e-9]


def fibonacci_bloch_grid(n: int = 10_000) -> np.ndarray:
    """``n`` pure qubit kets spread over the Bloch sphere, shape (n, 2)."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    polar = np.arccos(z)
    azimuth = np.pi * (1.0 + np.sqrt(5.0)) * k
    return np.column_stack([np.cos(polar / 2), np.exp(1j * azimuth) * np.sin(polar / 2)])


def best_rank_one_confidence(theta: float, kets: np.ndarray) -> float:
    """Largest posterior confidence any sampled |chi><chi| reaches for any state."""
    ens = symmetric_states(theta)
    vs = np.array([s.vector for s in ens.states])
    amps = np.abs(kets.conj() @ vs.T) ** 2  # (n, 3)
    p = np.array(ens.priors)
    total = amps @ p
    ok = total > 1e-15
    return float(np.max((amps[ok] * p) / total[ok, None]))


def corrupt_inconclusive(factory: Callable[[float], Povm], scale: float = 1.1) -> Callable[[float], Povm]:
    """Negative control: rescale the inconclusive element."""

    def corrupted(theta):
        povm = factory(theta)
        return povm.replace(INCONCLUSIVE, povm[INCONCLUSIVE] * scale)

    return corrupted


class _Context:
    """Grid, POVM factory and lazily solved network settings shared by the checks."""

    def __init__(self, grid, povm_factory):
        self.grid = list(grid)
        self.positive = [t for t in self.grid if t > 0]
        self.povm_factory = povm_factory
        self._solved = None

    @property
    def solved(self):
        if self._solved is None:
            self._solved = optics.solve_grid(self.grid)
        return self._solved


def check_confidence(ctx):
    worst = 0.0
    for t in ctx.positive:
        for c in confidences(symmetric_states(t), ctx.povm_factory(t)):
            worst = max(worst, abs(c - TWO_THIRDS) if c is not None else np.inf)
    return [CheckResult("confidence = 2/3 (theta > 0)", worst <= 1e-9, worst, 1e-9)]


def check_inconclusive_law(ctx):
    worst = 0.0
    for t in ctx.grid:
        povm = ctx.povm_factory(t)
        probs = outcome_probability_matrix(symmetric_states(t), povm).column(INCONCLUSIVE)
        pq = povm[INCONCLUSIVE].matrix
        law = np.cos(2 * np.deg2rad(t))
        for i, s in enumerate(symmetric_states(t).states):
            v = s.vector
            direct = float(np.real(np.trace(np.outer(v, v.conj()) @ pq)))
            worst = max(worst, abs(probs[i] - law), abs(direct - law))
    return [CheckResult("P(?) = cos 2theta", worst <= 1e-12, worst, 1e-12)]


def check_min_error(ctx):
    worst, order_ok = 0.0, True
    for t in ctx.grid:
        ens = symmetric_states(t)
        cs = confidences(ens, min_error_srm(ens))
        closed = (1 + np.sin(2 * np.deg2rad(t))) / 3
        worst = max(worst, max(abs(c - closed) for c in cs))
        if t < 45:
            order_ok &= all(c < TWO_THIRDS for c in cs)
        else:
            order_ok &= all(abs(c - TWO_THIRDS) <= 1e-9 for c in cs)
    name = "min-error confidence = (1+sin 2theta)/3, below 2/3 for theta < 45"
    return [CheckResult(name, worst <= 1e-9 and order_ok, worst, 1e-9)]


def check_dilation(ctx):
    residual = max(
        float(np.max(np.abs(optics.network_probability_matrix(s, t) - _povm_matrix(ctx.povm_factory(t), t))))
        for s, t in zip(ctx.solved, ctx.grid)
    )
    return [CheckResult("dilation fidelity", residual < 1e-6, residual, 1e-6)]


def check_table(ctx):
    devs = {t: optics.table_deviation(s, t) for s, t in zip(ctx.solved, ctx.grid)}
    devs = {t: d for t, d in devs.items() if d is not None}
    if not devs:
        return []
    worst = max(max(d) for d in devs.values())
    bad = [f"{t:g}" for t, d in devs.items() if max(d) > optics.TABLE_TOLERANCE_DEG]
    detail = f"convention discrepancy at theta = {', '.join(bad)}" if bad else ""
    return [CheckResult(f"reference angles ({len(devs)} rows)", not bad, worst, optics.TABLE_TOLERANCE_DEG, detail)]


def check_nonideal(ctx):
    worst_ideal, margin = 0.0, np.inf
    for s, t in zip(ctx.solved, ctx.grid):
        ideal = optics.network_probability_matrix(s, t)
        band0 = optics.nonideal_band(t, 0.0, optics.DEFAULT_LEAK_PHASES, s)
        for env in (band0.intensity_lo, band0.intensity_hi):
            worst_ideal = max(worst_ideal, float(np.max(np.abs(env - ideal))))
        if 10 <= t <= 30:
            conf_real = optics.nonideal_band(t, optics.NOMINAL_LEAK, (0.0,), s).confidences[0]
            me = (1 + np.sin(2 * np.deg2rad(t))) / 3
            margin = min(margin, float(np.min(conf_real - me)))
    out = [CheckResult("leak=0 envelope equals ideal curve", worst_ideal == 0.0, worst_ideal, 0.0)]
    if np.isfinite(margin):
        name = "leak=0.005 real-coefficient confidence above min-error (10-30 deg)"
        out.append(CheckResult(name, margin > 0, margin, 0.0, "measured = smallest margin"))
    return out


def check_povm_validity(ctx):
    worst_psd = worst_complete = 0.0
    for t in ctx.grid:
        for povm in (ctx.povm_factory(t), min_error_srm(symmetric_states(t))):
            rep = povm_validate(povm)
            worst_psd = max(worst_psd, rep.max_negative_eigenvalue)
            worst_complete = max(worst_complete, rep.completeness_error, rep.hermiticity_error)
    return [
        CheckResult("POVM positivity", worst_psd <= 1e-10, worst_psd, 1e-10),
        CheckResult("POVM completeness", worst_complete <= 1e-10, worst_complete, 1e-10),
    ]


def check_symmetry(ctx):
    worst_rows = worst_cyc = 0.0
    for t in ctx.grid:
        m = _povm_matrix(ctx.povm_factory(t), t)
        worst_rows = max(worst_rows, float(np.max(np.abs(m.sum(axis=1) - 1))))
        for i in range(3):
            for j in range(3):
                worst_cyc = max(worst_cyc, abs(m[i, j] - m[0, (j - i) % 3]))
            worst_cyc = max(worst_cyc, abs(m[i, 3] - m[0, 3]))
    worst_pd = 0.0
    for s, t in zip(ctx.solved, ctx.grid):
        d = optics.detector_intensities(optics.build_measurement_network(s), optics.prepare_input(t, 1))
        worst_pd = max(worst_pd, abs(d.pd0 - d.pd2))
    return [
        CheckResult("probability rows sum to 1", worst_rows <= 1e-10, worst_rows, 1e-10),
        CheckResult("cyclic symmetry", worst_cyc <= 1e-12, worst_cyc, 1e-12),
        CheckResult("PD0 = PD2 for input 1", worst_pd <= 1e-9, worst_pd, 1e-9),
    ]


def check_bloch_optimality(ctx):
    kets = fibonacci_bloch_grid()
    best = max((best_rank_one_confidence(t, kets) for t in ctx.positive), default=0.0)
    return [CheckResult("Bloch-grid optimality", best <= TWO_THIRDS + 1e-6, best - TWO_THIRDS, 1e-6, "measured = best - 2/3")]


CHECKS = (
    check_confidence,
    check_inconclusive_law,
    check_min_error,
    check_dilation,
    check_table,
    check_nonideal,
    check_povm_validity,
    check_symmetry,
    check_bloch_optimality,
)


def run_checks(grid, povm_factory: Callable[[float], Povm] = trine_max_confidence_povm) -> list[CheckResult]:
    """Run every check; an exception inside a check is reported as a failure."""
    ctx = _Context(grid, povm_factory)
    results = []
    for check in CHECKS:
        try:
            results.extend(check(ctx))
        except Exception as exc:  # noqa: BLE001 - reported, not swallowed
            name = check.__name__.removeprefix("check_").replace("_", " ")
            results.append(CheckResult(name, False, float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"))
    return results


def _povm_matrix(povm: Povm, theta: float) -> np.ndarray:
    m = outcome_probability_matrix(symmetric_states(theta), povm)
    return np.column_stack([m.column(j) for j in (0, 1, 2, INCONCLUSIVE)])
