"""Command-line harness: ``maxconf sweep | table | verify``.

Exit codes: 0 success, 1 solver or invariant failure, 2 bad arguments.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import optics
from .qstate import INCONCLUSIVE
from .strategies import MAX_CONFIDENCE, MIN_ERROR, STRATEGIES, strategy_report, trine_max_confidence_povm
from .verification import corrupt_inconclusive, default_grid, run_checks

SIG_DIGITS = 12
DETECTORS = ("pd0", "pd1", "pd2", "pdq")

SWEEP_COLUMNS = (
    ["theta_deg", "input_index"]
    + [f"p_{d}" for d in DETECTORS]
    + ["conf_mc", "conf_me"]
    + [f"envelope_lo_{d}" for d in DETECTORS]
    + ["envelope_lo_conf"]
    + [f"envelope_hi_{d}" for d in DETECTORS]
    + ["envelope_hi_conf"]
)
TABLE_COLUMNS = (
    ["theta_deg", "hwp4", "hwp5", "hwp6", "hwp7", "qwp2", "qwp3", "interferometer_phase_rad"]
    + [f"table_hwp{k}" for k in range(4, 8)]
    + [f"dev_hwp{k}" for k in range(4, 8)]
    + ["max_dev_deg", "angle_match", "network_residual"]
)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    theta_start: float = 0.0
    theta_end: float = 45.0
    theta_step: float = 5.0
    strategies: tuple[str, ...] = STRATEGIES
    leak_intensity: float = optics.NOMINAL_LEAK
    leak_phase_grid: tuple[float, ...] = optics.DEFAULT_LEAK_PHASES
    output_format: str = "csv"
    output_path: str | None = None

    def __post_init__(self):
        if not self.theta_step > 0:
            raise UsageError("--theta-step must be positive")
        if self.theta_start > self.theta_end:
            raise UsageError("--theta-start must not exceed --theta-end")
        if self.theta_start < 0 or self.theta_end > 45:
            raise UsageError("theta range must lie within [0, 45] degrees")
        if not 0 <= self.leak_intensity <= optics.MAX_LEAK:
            raise UsageError(f"--leak must lie in [0, {optics.MAX_LEAK}]")
        if not self.leak_phase_grid:
            raise UsageError("--leak-phase-grid is empty")
        if self.output_format not in ("csv", "json"):
            raise UsageError("--format must be csv or json")
        bad = set(self.strategies) - set(STRATEGIES)
        if bad or not self.strategies:
            raise UsageError(f"unknown strategies {sorted(bad)}")

    def thetas(self) -> list[float]:
        return default_grid(self.theta_step, self.theta_start, self.theta_end)

    def as_dict(self) -> dict:
        return {
            "theta_start": num(self.theta_start),
            "theta_end": num(self.theta_end),
            "theta_step": num(self.theta_step),
            "strategies": list(self.strategies),
            "leak_intensity": num(self.leak_intensity),
            "leak_phase_grid": [num(p) for p in self.leak_phase_grid],
        }


@dataclass(frozen=True)
class SweepRecord:
    theta: float
    probability_matrix: np.ndarray | None  # 3x4, columns (omega_0, omega_1, omega_2, omega_?)
    confidences: tuple | None
    min_error_confidence: tuple | None
    settings: optics.MeasurementSettings | None
    network_residual: float | None
    nonideal_envelope: optics.NonidealBand | None = field(repr=False, default=None)

    @property
    def valid(self) -> bool:
        return self.network_residual is None or self.network_residual < 1e-6


def num(x):
    """Round to 12 significant digits; None for missing or NaN values."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if abs(x) < 1e-15:
        return 0.0
    return float(f"{x:.{SIG_DIGITS}g}")


def cell(x) -> str:
    """CSV text for one value; blank for missing."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, str)):
        return str(x)
    v = num(x)
    return "" if v is None else f"{v:.{SIG_DIGITS}g}"


def build_records(config: RunConfig) -> list[SweepRecord]:
    thetas = config.thetas()
    mc = MAX_CONFIDENCE in config.strategies
    settings = optics.solve_grid(thetas) if mc else [None] * len(thetas)
    records = []
    for t, s in zip(thetas, settings):
        me_conf = strategy_report(t, MIN_ERROR).confidence_per_outcome if MIN_ERROR in config.strategies else None
        if mc:
            rep = strategy_report(t, MAX_CONFIDENCE)
            probs = np.column_stack([rep.probabilities.column(j) for j in (0, 1, 2, INCONCLUSIVE)])
            band = optics.nonideal_band(t, config.leak_intensity, config.leak_phase_grid, s)
            records.append(
                SweepRecord(t, probs, rep.confidence_per_outcome, me_conf, s, optics.network_residual(s, t), band)
            )
        else:
            records.append(SweepRecord(t, None, None, me_conf, None, None, None))
    return records


def sweep_rows(records: list[SweepRecord]) -> list[list[str]]:
    rows = []
    for r in records:
        for i in range(3):
            row = [cell(r.theta), str(i)]
            row += [cell(v) for v in (r.probability_matrix[i] if r.probability_matrix is not None else [None] * 4)]
            row.append(cell(r.confidences[i]) if r.confidences is not None else "")
            row.append(cell(r.min_error_confidence[i]) if r.min_error_confidence is not None else "")
            band = r.nonideal_envelope
            for lo_hi in ("lo", "hi"):
                if band is None:
                    row += [""] * 5
                    continue
                inten = band.intensity_lo if lo_hi == "lo" else band.intensity_hi
                conf = band.confidence_lo if lo_hi == "lo" else band.confidence_hi
                row += [cell(v) for v in inten[i]] + [cell(conf[i])]
            rows.append(row)
    return rows


def _settings_dict(s: optics.MeasurementSettings | None) -> dict | None:
    if s is None:
        return None
    return {
        "hwp4": num(s.hwp4),
        "hwp5": num(s.hwp5),
        "hwp6": num(s.hwp6),
        "hwp7": num(s.hwp7),
        "qwp2": num(s.qwp2),
        "qwp3": num(s.qwp3),
        "interferometer_phase": num(s.interferometer_phase),
    }


def _matrix(m) -> list | None:
    if m is None:
        return None
    return [[num(v) for v in row] for row in np.atleast_2d(m)]


def sweep_json(config: RunConfig, records: list[SweepRecord]) -> dict:
    out = []
    for r in records:
        band = r.nonideal_envelope
        out.append(
            {
                "theta_deg": num(r.theta),
                "valid": r.valid,
                "probability_matrix": {
                    "rows": ["psi_0", "psi_1", "psi_2"],
                    "columns": list(DETECTORS),
                    "values": _matrix(r.probability_matrix),
                },
                "confidence_max_confidence": None if r.confidences is None else [num(c) for c in r.confidences],
                "confidence_min_error": None
                if r.min_error_confidence is None
                else [num(c) for c in r.min_error_confidence],
                "settings": _settings_dict(r.settings),
                "network_residual": num(r.network_residual),
                "nonideal_envelope": None
                if band is None
                else {
                    "leak_intensity": num(band.leak_intensity),
                    "intensity_lo": _matrix(band.intensity_lo),
                    "intensity_hi": _matrix(band.intensity_hi),
                    "confidence_lo": [num(c) for c in band.confidence_lo],
                    "confidence_hi": [num(c) for c in band.confidence_hi],
                },
            }
        )
    return {"command": "sweep", "config": config.as_dict(), "records": out}


def table_rows(config: RunConfig):
    thetas = config.thetas()
    rows = []
    for t, s in zip(thetas, optics.solve_grid(thetas)):
        dev = optics.table_deviation(s, t)
        printed = optics.REFERENCE_ANGLES.get(int(round(t))) if dev is not None else None
        row = {
            "theta_deg": num(t),
            "hwp4": num(s.hwp4),
            "hwp5": num(s.hwp5),
            "hwp6": num(s.hwp6),
            "hwp7": num(s.hwp7),
            "qwp2": num(s.qwp2),
            "qwp3": num(s.qwp3),
            "interferometer_phase_rad": num(s.interferometer_phase),
        }
        for k in range(4):
            row[f"table_hwp{k + 4}"] = num(printed[k]) if printed else None
        for k in range(4):
            row[f"dev_hwp{k + 4}"] = num(dev[k]) if dev else None
        row["max_dev_deg"] = num(max(dev)) if dev else None
        row["angle_match"] = None if dev is None else bool(max(dev) <= optics.TABLE_TOLERANCE_DEG)
        row["network_residual"] = num(optics.network_residual(s, t))
        rows.append(row)
    return rows


def to_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _check_writable(path: str | None):
    if path is None or path == "-":
        return
    parent = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise UsageError(f"cannot write to {path}")
    if os.path.isdir(path):
        raise UsageError(f"{path} is a directory")


def _emit(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_sweep(config: RunConfig) -> int:
    _check_writable(config.output_path)
    try:
        records = build_records(config)
    except optics.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    invalid = [r for r in records if not r.valid]
    for r in invalid:
        print(f"theta={r.theta:g}: network residual {r.network_residual:.3e} exceeds 1e-6", file=sys.stderr)
    if config.output_format == "json":
        text = to_json(sweep_json(config, records))
    else:
        text = to_csv(SWEEP_COLUMNS, sweep_rows(records))
    _emit(text, config.output_path)
    return 1 if invalid else 0


def cmd_table(config: RunConfig) -> int:
    _check_writable(config.output_path)
    try:
        rows = table_rows(config)
    except optics.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    for r in rows:
        if r["angle_match"] is False:
            print(f"theta={r['theta_deg']:g}: angle convention discrepancy, max {r['max_dev_deg']:.3f} deg", file=sys.stderr)
    if config.output_format == "json":
        text = to_json({"command": "table", "config": config.as_dict(), "rows": rows})
    else:
        text = to_csv(TABLE_COLUMNS, [[cell(r[c]) for c in TABLE_COLUMNS] for r in rows])
    _emit(text, config.output_path)
    return 1 if any(r["network_residual"] >= 1e-6 for r in rows) else 0


def cmd_verify(theta_step: float = 5.0, mutate: bool = False, out=None) -> int:
    out = out or sys.stdout
    factory = trine_max_confidence_povm
    if mutate:
        factory = corrupt_inconclusive(factory)
        print("mutation mode: inconclusive element scaled by 1.1", file=out)
    results = run_checks(default_grid(theta_step), factory)
    for r in results:
        print(r.line(), file=out)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed", file=out)
    return 0 if failed == 0 else 1


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_run_options(p: argparse.ArgumentParser):
    p.add_argument("--theta-start", type=float, default=0.0, help="degrees (default 0)")
    p.add_argument("--theta-end", type=float, default=45.0, help="degrees (default 45)")
    p.add_argument("--theta-step", type=float, default=5.0, help="degrees (default 5)")
    p.add_argument("--strategy", action="append", choices=STRATEGIES, help="repeatable; default both")
    p.add_argument("--leak", type=float, default=optics.NOMINAL_LEAK, help="PBS2/PBS3 leak fraction (default 0.005)")
    p.add_argument("--leak-phase-grid", type=_float_list, default=optics.DEFAULT_LEAK_PHASES, help="comma-separated radians")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output file (default stdout)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxconf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("sweep", help="probability matrices, confidences and non-ideal envelopes per theta"))
    _add_run_options(sub.add_parser("table", help="solved waveplate angles against the reference angle table"))
    v = sub.add_parser("verify", help="run the invariant and reproduction checks")
    v.add_argument("--theta-step", type=float, default=5.0)
    v.add_argument("--mutate", action="store_true", help="negative control: corrupt the inconclusive element")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            if not args.theta_step > 0:
                raise UsageError("--theta-step must be positive")
            return cmd_verify(args.theta_step, args.mutate)
        config = RunConfig(
            theta_start=args.theta_start,
            theta_end=args.theta_end,
            theta_step=args.theta_step,
            strategies=tuple(args.strategy) if args.strategy else STRATEGIES,
            leak_intensity=args.leak,
            leak_phase_grid=tuple(args.leak_phase_grid),
            output_format=args.format,
            output_path=args.out,
        )
        return cmd_sweep(config) if args.command == "sweep" else cmd_table(config)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"maxconf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
