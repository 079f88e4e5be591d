"""File formats: ensemble CSV, JSON run configuration, fit reports, CMI exports.

All emitted files are deterministic: floats in CSV use ``.17g`` (lossless),
JSON uses Python's shortest round-trip repr, text is ASCII with LF endings,
and nothing depends on the clock or the locale.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from . import asa
from .errors import FormatError, SpecificationError, UsageError
from .fit import FitReport
from .likelihood import COORDINATES, COUNT_FLOOR
from .model import (AREA, JANUS5_INITIAL, CoefficientSet, ModelSpec, StateVector, janus5,
                    table1_coefficients)
from .simulator import SimConfig
from .trajectory import DT_RTOL, Ensemble, Trajectory

DASH = "-"
ETA = "eta"


def fmt(v: float) -> str:
    """Machine format: 17 significant digits, round-trips exactly."""
    return format(float(v), ".17g")


def fmt_table(v: float) -> str:
    """Human format with 2 significant digits, e.g. ``-8.6E-5``."""
    mant, exp = format(float(v), ".1E").split("E")
    return f"{mant}E{int(exp)}"


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def dump_json(doc, path) -> None:
    _write_text(path, json.dumps(doc, indent=2, allow_nan=False) + "\n")


def load_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None


# --- ensemble CSV --------------------------------------------------------

def ensemble_header(units) -> list:
    return ["run", "t", *units]


def write_ensemble_csv(ensemble: Ensemble, path) -> None:
    lines = [",".join(ensemble_header(ensemble.units))]
    for r in ensemble:
        for t, row in zip(r.t, r.m):
            lines.append(",".join([str(int(r.run_id)), fmt(t), *(fmt(v) for v in row)]))
    _write_text(path, "\n".join(lines) + "\n")


def read_ensemble_csv(path, spec: ModelSpec | None = None) -> Ensemble:
    """Parse and validate an ensemble file; every problem is reported with its line number."""
    spec = spec or janus5()
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    want = ensemble_header(spec.unit_names)
    if not rows:
        raise FormatError(f"{path}: line 1: empty file, expected header {','.join(want)}")
    if [c.strip() for c in rows[0]] != want:
        raise FormatError(f"{path}: line 1: header {','.join(rows[0])!r} does not match {','.join(want)!r}")

    runs: list[tuple[int, int, list, list]] = []  # (run_id, first line, t values, count rows)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(want):
            raise FormatError(f"{path}: line {lineno}: expected {len(want)} fields, got {len(row)}")
        try:
            run_id = int(row[0])
            t = float(row[1])
            m = [float(c) for c in row[2:]]
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: non-numeric field") from None
        if not math.isfinite(t) or not all(math.isfinite(v) for v in m):
            raise FormatError(f"{path}: line {lineno}: non-finite value")
        if any(v < 0 for v in m):
            raise FormatError(f"{path}: line {lineno}: negative count")
        if not runs or runs[-1][0] != run_id:
            if runs and run_id < runs[-1][0]:
                raise FormatError(f"{path}: line {lineno}: rows not sorted by run (run {run_id} after {runs[-1][0]})")
            if any(r[0] == run_id for r in runs):
                raise FormatError(f"{path}: line {lineno}: run {run_id} is not contiguous")
            runs.append((run_id, lineno, [], []))
        rid, first, ts, ms = runs[-1]
        if ts and not t > ts[-1]:
            raise FormatError(f"{path}: line {lineno}: run {run_id} times not strictly increasing")
        if len(ts) >= 2:
            step = ts[1] - ts[0]
            if abs((t - ts[-1]) - step) > DT_RTOL * abs(step):
                raise FormatError(f"{path}: line {lineno}: run {run_id} has non-uniform time steps")
        ts.append(t)
        ms.append(m)
    if not runs:
        raise FormatError(f"{path}: line 2: no data rows")
    for rid, first, ts, ms in runs:
        if len(ts) < 2:
            raise FormatError(f"{path}: line {first}: run {rid} has fewer than 2 states")
        step = ts[1] - ts[0]
        if abs(step - spec.dt) > DT_RTOL * spec.dt:
            raise FormatError(f"{path}: line {first + 1}: run {rid} has dt {step:g}, model expects {spec.dt:g}")
    return Ensemble(spec.unit_names, [Trajectory(rid, ts, ms) for rid, _, ts, ms in runs])


# --- run configuration ---------------------------------------------------

SECTIONS = ("model", "sim", "fit", "asa", "io")
SIM_KEYS = {"n_runs", "n_epochs", "substeps_per_epoch", "master_seed", "count_floor", "stepping",
            "initial", "t0", "theta", "noise"}
FIT_KEYS = {"bounds", "coordinates", "count_floor", "polish", "max_polish"}
IO_KEYS = {"data", "theta", "out"}


@dataclass
class FitSettings:
    coordinates: str = "M"
    count_floor: float = COUNT_FLOOR
    polish: bool = True
    max_polish: int = 100_000


@dataclass
class IoSettings:
    data: str | None = None
    theta: str | None = None
    out: str = "."


@dataclass
class RunConfig:
    """Parsed run configuration. Every section is optional; defaults reproduce the janus5 setup."""

    spec: ModelSpec = field(default_factory=janus5)
    sim: dict = field(default_factory=dict)
    fit: FitSettings = field(default_factory=FitSettings)
    asa: dict = field(default_factory=dict)
    io: IoSettings = field(default_factory=IoSettings)

    def sim_config(self, **overrides) -> SimConfig:
        raw = {**self.sim, **{k: v for k, v in overrides.items() if v is not None}}
        theta = raw.pop("theta", None)
        theta = table1_coefficients() if theta is None else CoefficientSet.from_json(theta)
        noise = raw.pop("noise", None)
        if noise is not None:
            if not (isinstance(noise, (int, float)) and math.isfinite(noise) and noise >= 0):
                raise UsageError(f"noise multiplier must be a finite number >= 0, got {noise!r}")
            theta = theta.scaled_noise(float(noise))
        initial = raw.pop("initial", None)
        t0 = raw.pop("t0", 0.0)
        initial = StateVector.from_mapping(self.spec, JANUS5_INITIAL if initial is None else initial, t0)
        return SimConfig(spec=self.spec, theta=theta, initial=initial, **raw)

    def asa_config(self, **overrides) -> asa.AsaConfig:
        raw = {**self.asa, **{k: v for k, v in overrides.items() if v is not None}}
        return asa.AsaConfig(**raw)


def _check_keys(section: str, doc, allowed) -> None:
    if not isinstance(doc, Mapping):
        raise UsageError(f"config section {section!r} must be an object")
    extra = set(doc) - set(allowed)
    if extra:
        raise UsageError(f"unknown keys in config section {section!r}: {sorted(extra)}")


def _check_path(key: str, value) -> None:
    if value is None:
        return
    if not isinstance(value, str) or not value or "\0" in value:
        raise UsageError(f"io.{key} must be a non-empty path string")


def parse_config(doc: Mapping) -> RunConfig:
    """Strictly validate a configuration document (unknown keys are errors)."""
    _check_keys("<top level>", doc, SECTIONS)
    cfg = RunConfig()
    if "model" in doc:
        if not isinstance(doc["model"], Mapping):
            raise UsageError("config section 'model' must be an object")
        cfg.spec = ModelSpec.from_json(doc["model"])
    fit_doc = doc.get("fit", {})
    _check_keys("fit", fit_doc, FIT_KEYS)
    if "bounds" in fit_doc:
        cfg.spec = cfg.spec.with_bounds(fit_doc["bounds"])
    cfg.fit = FitSettings(**{k: v for k, v in fit_doc.items() if k != "bounds"})
    if cfg.fit.coordinates not in COORDINATES:
        raise UsageError(f"fit.coordinates must be one of {COORDINATES}, got {cfg.fit.coordinates!r}")
    sim_doc = doc.get("sim", {})
    _check_keys("sim", sim_doc, SIM_KEYS)
    cfg.sim = dict(sim_doc)
    asa_doc = doc.get("asa", {})
    _check_keys("asa", asa_doc, {f.name for f in fields(asa.AsaConfig)})
    cfg.asa = dict(asa_doc)
    io_doc = doc.get("io", {})
    _check_keys("io", io_doc, IO_KEYS)
    for k, v in io_doc.items():
        _check_path(k, v)
    cfg.io = IoSettings(**io_doc)
    # build once so bad values surface at load time rather than mid-run
    cfg.sim_config()
    cfg.asa_config().validate(cfg.spec.n_params)
    return cfg


def load_config(path) -> RunConfig:
    doc = load_json(path)
    if not isinstance(doc, Mapping):
        raise UsageError(f"{path}: configuration must be a JSON object")
    try:
        return parse_config(doc)
    except TypeError as exc:
        raise UsageError(f"{path}: bad configuration value: {exc}") from None


def load_theta(path, spec: ModelSpec) -> CoefficientSet:
    """Read a coefficient set from a fit.json or a bare ``{"x": ..., "y": ..., "z": ...}`` document."""
    doc = load_json(path)
    if not isinstance(doc, Mapping):
        raise SpecificationError(f"{path}: coefficient file must be a JSON object")
    theta = CoefficientSet.from_json(doc["theta"] if "theta" in doc else doc)
    theta.check(spec)
    return theta


# --- fit report ----------------------------------------------------------

def report_table(report: FitReport) -> str:
    """Equations as rows, source units plus the noise coefficient as columns."""
    spec = report.spec
    theta = report.theta
    units = spec.unit_names
    header = ["", *units, ETA]
    body = []
    for target in units:
        row = [target]
        for source in units:
            cell = []
            if (target, source) in theta.x:
                cell.append(fmt_table(theta.x[(target, source)]))
            if (target, source) in theta.y:
                cell.append(fmt_table(theta.y[(target, source)]) + "y")
            row.append("/".join(cell) if cell else DASH)
        row.append(fmt_table(theta.z[target]) if target in theta.z else DASH)
        body.append(row)
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *body]]
    return "\n".join(lines) + "\n"


def report_text(report: FitReport) -> str:
    hits = ", ".join(f"{k} ({v})" for k, v in sorted(report.bounds_hit.items())) or "none"
    area = any(t.kind == AREA for t in report.spec.terms)
    legend = "cells: point-fire x" + (", area-fire y suffixed 'y'" if area else "") + f"; {ETA}: noise z; {DASH}: no term"
    return (f"model {report.spec.name}: {report.spec.n_params} coefficients, {report.n_transitions} transitions\n"
            f"{legend}\n\n"
            f"{report_table(report)}\n"
            f"cost {fmt(report.cost)}\n"
            f"generated {report.generated}, accepted {report.accepted}, evaluations {report.evaluations}, "
            f"stopped by {report.stopped_by}\n"
            f"bounds hit: {hits}\n"
            f"clamp events: {report.clamp_events}\n")


def parse_report_table(text: str) -> dict:
    """Inverse of :func:`report_table` for tests and tooling: ``{(target, column): str}``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    cols = lines[0].split()
    out = {}
    for ln in lines[1:]:
        cells = ln.split()
        for col, cell in zip(cols, cells[1:]):
            out[(cells[0], col)] = cell
    return out


def report_json(report: FitReport) -> dict:
    vec = report.vector
    return {
        "model": report.spec.to_json(),
        "coordinates": report.coordinates,
        "theta": report.theta.to_json(),
        "parameters": {n: float(v) for n, v in zip(report.spec.param_names, vec)},
        "cost": report.cost,
        "asa_cost": report.asa_cost,
        "generated": report.generated,
        "accepted": report.accepted,
        "evaluations": report.evaluations,
        "polish_evaluations": report.polish_evaluations,
        "stopped_by": report.stopped_by,
        "bounds_hit": dict(sorted(report.bounds_hit.items())),
        "clamp_events": report.clamp_events,
        "n_transitions": report.n_transitions,
    }


def report_csv(report: FitReport) -> str:
    spec = report.spec
    lines = ["parameter,value,lower,upper,bound_hit"]
    for name, v, lo, hi in zip(spec.param_names, report.vector, spec.lower, spec.upper):
        lines.append(f"{name},{fmt(v)},{fmt(lo)},{fmt(hi)},{report.bounds_hit.get(name, '')}")
    return "\n".join(lines) + "\n"


def write_fit_outputs(report: FitReport, out_dir) -> dict:
    out = Path(out_dir)
    paths = {"text": out / "fit.txt", "csv": out / "fit.csv", "json": out / "fit.json"}
    _write_text(paths["text"], report_text(report))
    _write_text(paths["csv"], report_csv(report))
    dump_json(report_json(report), paths["json"])
    return paths


# --- CMI and traces ------------------------------------------------------

def cmi_csv(series, units) -> str:
    lines = [",".join(["series", "t", *units])]
    for s in series:
        for t, row in zip(s.t, s.pi):
            lines.append(",".join([s.label, fmt(t), *(fmt(v) for v in row)]))
    return "\n".join(lines) + "\n"


def cmi_energy_csv(series) -> str:
    lines = ["series,t,energy"]
    for s in series:
        lines.extend(f"{s.label},{fmt(t)},{fmt(e)}" for t, e in zip(s.t, s.energy))
    return "\n".join(lines) + "\n"


def trace_csv(trace) -> str:
    lines = ["generated,accepted,best_cost"]
    lines.extend(f"{int(g)},{int(a)},{fmt(c)}" for g, a, c in trace)
    return "\n".join(lines) + "\n"


def write_text(path, text: str) -> None:
    _write_text(path, text)


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {os.fspath(p)}: {exc.strerror}") from None
    return p
