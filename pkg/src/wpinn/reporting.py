"""Run reports, error-summary tables and solution-profile dumps.

Every table is emitted as CSV with floats written to 17 significant digits,
so re-reading a file reproduces the in-memory values exactly.

CSV schemas
-----------
profile:  t, x, mean, stddev, exact_reference
summary:  preset, M_int, M_tb, M_sb, E_r, E_r_T
runs:     preset, config, seed, criterion, E_r_T, E_r, diverged
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .oracles import Reference, relative_errors

PROFILE_COLUMNS = ("t", "x", "mean", "stddev", "exact_reference")
SUMMARY_COLUMNS = ("preset", "M_int", "M_tb", "M_sb", "E_r", "E_r_T")
RUN_COLUMNS = ("preset", "config", "seed", "criterion", "E_r_T", "E_r", "diverged")


def fmt(v):
    """Lossless text form of a float (17 significant digits)."""
    return f"{float(v):.17g}"


def sample_std(values):
    """Two-pass sample standard deviation; 0 for a single value."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    m = v.sum() / v.size
    return float(np.sqrt(np.sum((v - m) ** 2) / (v.size - 1)))


@dataclass
class RunRecord:
    seed: int
    criterion: float
    E_r_T: float
    E_r: float
    diverged: bool = False


@dataclass
class RunReport:
    """One preset's ensemble: per-run rows plus the errors of the averaged predictor."""

    preset_id: str
    config: str
    counts: tuple                 # (M_int, M_sb, M_tb)
    runs: list = field(default_factory=list)
    E_r_T: float = float("nan")   # of the retraining average
    E_r: float = float("nan")
    wall_time: float = 0.0

    @property
    def n_ok(self):
        return sum(not r.diverged for r in self.runs)

    @property
    def n_diverged(self):
        return sum(r.diverged for r in self.runs)

    def run_stats(self):
        """Mean and sample stddev of per-run ``E_r_T`` over non-diverged runs."""
        vals = [r.E_r_T for r in self.runs if not r.diverged]
        if not vals:
            return float("nan"), float("nan")
        return float(np.mean(vals)), sample_std(vals)

    def runs_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RUN_COLUMNS)
            for r in self.runs:
                w.writerow([self.preset_id, self.config, r.seed, fmt(r.criterion), fmt(r.E_r_T), fmt(r.E_r),
                            int(r.diverged)])
        return Path(path)


def report_ensemble(result, preset, reference=None, wall_time=0.0) -> RunReport:
    """Build a report from an ``EnsembleResult``, scoring each run and the average."""
    ref = reference if reference is not None else Reference(preset)
    counts = None
    runs = []
    for out in result.runs:
        if out.diverged:
            runs.append(RunRecord(out.seed, float("nan"), float("nan"), float("nan"), True))
            continue
        m = out.model
        counts = counts or (m.collocation.counts if m.collocation is not None else None)
        e_t, e = relative_errors(m.predict, preset, ref)
        runs.append(RunRecord(out.seed, m.final_training_error, e_t, e))
    rep = RunReport(preset.id, result.label, tuple(counts or preset.counts), runs, wall_time=wall_time)
    if rep.n_ok:
        rep.E_r_T, rep.E_r = relative_errors(lambda x, t: result.predict(x, t)[0], preset, ref)
    return rep


def profile_dump(source, preset, times, n_x, reference=None):
    """Rows ``(t, x, mean, stddev, exact_reference)`` on ``n_x`` uniform nodes per time.

    ``source`` is an ensemble (anything with ``predict`` returning mean and
    stddev, or a list of models) or a plain ``predictor(x, t)``.
    """
    if n_x < 2:
        raise ConfigurationError("n_x must be at least 2")
    times = [float(t) for t in times]
    if any(t < 0 or t > preset.T for t in times):
        raise ConfigurationError(f"profile times must lie in [0, {preset.T}]")
    ref = reference if reference is not None else Reference(preset)
    a, b = preset.domain
    x = np.linspace(a, b, n_x)
    exact = ref.grid(x, times)
    rows = []
    for i, t in enumerate(times):
        tt = np.full_like(x, t)
        if isinstance(source, (list, tuple)) or hasattr(source, "models"):
            from .training import average_predict
            mean, std = average_predict(source, x, tt)
        elif hasattr(source, "predict"):
            mean, std = np.asarray(source.predict(x, tt), dtype=float), np.zeros_like(x)
        else:
            mean, std = np.asarray(source(x, tt), dtype=float), np.zeros_like(x)
        rows.extend(zip(tt, x, mean, std, exact[i]))
    return [tuple(float(v) for v in r) for r in rows]


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return Path(path)


def read_profile(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != PROFILE_COLUMNS:
            raise ConfigurationError(f"unexpected profile header {header}")
        return [tuple(float(v) for v in row) for row in rd]


@dataclass
class SummaryTable:
    rows: list                    # dicts keyed by SUMMARY_COLUMNS

    def to_csv(self, path):
        return write_rows(path, SUMMARY_COLUMNS, [[r[c] for c in SUMMARY_COLUMNS] for r in self.rows])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append({"preset": r["preset"], "M_int": int(r["M_int"]), "M_tb": int(r["M_tb"]),
                             "M_sb": int(r["M_sb"]), "E_r": float(r["E_r"]), "E_r_T": float(r["E_r_T"])})
        return cls(rows)

    def to_text(self):
        head = list(SUMMARY_COLUMNS)
        body = [[r["preset"], str(r["M_int"]), str(r["M_tb"]), str(r["M_sb"]), f"{r['E_r']:.4g}",
                 f"{r['E_r_T']:.4g}"] for r in self.rows]
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in [head, *body]]
        return "\n".join(lines)

    def __eq__(self, other):
        return isinstance(other, SummaryTable) and self.rows == other.rows


def summarize(reports) -> SummaryTable:
    """One row per preset with sample counts and the averaged predictor's errors."""
    reports = list(reports)
    if not reports:
        raise ConfigurationError("nothing to summarize")
    rows = []
    for rep in reports:
        m_int, m_sb, m_tb = rep.counts
        rows.append({"preset": rep.preset_id, "M_int": int(m_int), "M_tb": int(m_tb), "M_sb": int(m_sb),
                     "E_r": float(rep.E_r), "E_r_T": float(rep.E_r_T)})
    return SummaryTable(rows)
