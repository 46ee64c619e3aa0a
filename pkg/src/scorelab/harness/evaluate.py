"""Rolling-window evaluation of postprocessing methods under several scores."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import NumericalError, SpecificationError
from ..scores import get_score
from .data import ForecastCase
from .postprocess import fit_bma, fit_emos, smoothed_ensemble

log = logging.getLogger(__name__)

DEFAULT_SCORES = ("ls", "hs", "lcs", "qs", "sphs")
COLUMN_NAMES = {"ls": "LS", "hs": "HS", "lcs": "LCS", "qs": "QS", "sphs": "SphS"}
METHODS = ("BMA", "EMOS", "SmoothedEnsemble")


@dataclass(frozen=True)
class EvalConfig:
    train_len_bma: int = 25
    train_len_emos: int = 40
    scores: tuple[str, ...] = DEFAULT_SCORES
    threads: int = 1

    def __post_init__(self):
        if self.train_len_bma < 1 or self.train_len_emos < 1:
            raise SpecificationError("training lengths must be >= 1")
        if not self.scores:
            raise SpecificationError("at least one score is required")
        for s in self.scores:
            get_score(s)


def column_name(score_id):
    return COLUMN_NAMES.get(score_id.lower(), score_id)


@dataclass
class ScoreReport:
    """Mean scores per method over the same ``n_cases`` scored cases."""

    methods: list[str]
    columns: list[str]
    records: list[dict]
    skips: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def n_cases(self):
        return len(self.records)

    def values(self, method, column):
        return np.array([r["scores"][method][column] for r in self.records])

    def mean(self, method, column):
        return math.fsum(self.values(method, column)) / self.n_cases if self.records else math.nan

    def stderr(self, method, column):
        v = self.values(method, column)
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan

    def paired(self, method, other, column):
        """Mean and standard error of per-case ``method - other`` differences."""
        d = self.values(method, column) - self.values(other, column)
        if d.size < 2:
            return math.nan, math.nan
        return math.fsum(d) / d.size, float(np.std(d, ddof=1) / math.sqrt(d.size))

    @property
    def rows(self):
        return {m: {c: self.mean(m, c) for c in self.columns} for m in self.methods}

    def to_dict(self, include_records=False):
        out = {
            "n_cases": self.n_cases,
            "columns": self.columns,
            "rows": self.rows,
            "stderr": {m: {c: self.stderr(m, c) for c in self.columns} for m in self.methods},
            "n_skipped": len(self.skips),
            "metadata": self.metadata,
        }
        if include_records:
            out["records"] = self.records
            out["skips"] = self.skips
        return out

    def to_json(self, include_records=False):
        return json.dumps(self.to_dict(include_records), indent=2, allow_nan=True)

    def format_table(self):
        width = max(len(m) for m in self.methods) + 2
        head = "method".ljust(width) + "".join(c.rjust(18) for c in self.columns)
        lines = [head]
        for m, row in self.rows.items():
            lines.append(m.ljust(width) + "".join(f"{row[c]:.10g}".rjust(18) for c in self.columns))
        lines.append(f"n_cases = {self.n_cases}, skipped = {len(self.skips)}")
        return "\n".join(lines)

    def write_skip_log(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case_id", "valid_time", "method", "reason"])
            for s in self.skips:
                w.writerow([s["case_id"], s["valid_time"], s["method"], s["reason"]])


def _check_order(cases):
    times = [c.valid_time for c in cases]
    if any(b < a for a, b in zip(times, times[1:])):
        raise SpecificationError("cases must be ordered by valid_time")


def _window(by_date, dates, t, length):
    out = []
    for d in dates[max(0, t - length) : t]:
        out.extend(by_date[d])
    return out


def rolling_evaluate(cases: Sequence[ForecastCase], config: EvalConfig = EvalConfig(), truth=None) -> ScoreReport:
    """Fit on trailing windows of distinct dates and score each later case.

    Evaluation starts at the first date with a full window for both methods.
    Parameters are pooled over stations. A case is skipped for all methods
    if any fit or predictive density fails on it, so every row averages the
    same cases. ``truth`` (anything with ``predictive(case)``) adds a row.
    """
    cases = list(cases)
    _check_order(cases)
    by_date: dict[str, list[ForecastCase]] = {}
    for c in cases:
        by_date.setdefault(c.date, []).append(c)
    dates = list(by_date)
    start = max(config.train_len_bma, config.train_len_emos)
    scorers = [(column_name(s), get_score(s)) for s in config.scores]
    methods = list(METHODS) + (["Truth"] if truth is not None else [])

    def run_date(t):
        date = dates[t]
        fits, errors = {}, {}
        for name, fitter, length in (("BMA", fit_bma, config.train_len_bma), ("EMOS", fit_emos, config.train_len_emos)):
            try:
                fits[name] = fitter(_window(by_date, dates, t, length))
            except NumericalError as exc:
                errors[name] = f"{type(exc).__name__}: {exc}"
        records, skips = [], []
        for case in by_date[date]:
            if not case.has_observation:
                continue
            failed = [(m, r) for m, r in errors.items()]
            densities = {}
            if not failed:
                for m in methods:
                    try:
                        if m == "SmoothedEnsemble":
                            densities[m] = smoothed_ensemble(case)
                        elif m == "Truth":
                            densities[m] = truth.predictive(case)
                        else:
                            densities[m] = fits[m].predictive(case)
                    except NumericalError as exc:
                        failed.append((m, f"{type(exc).__name__}: {exc}"))
            scores = {}
            if not failed:
                for m, q in densities.items():
                    try:
                        scores[m] = {col: float(s.score(case.observation, q)) for col, s in scorers}
                    except NumericalError as exc:
                        failed.append((m, f"{type(exc).__name__}: {exc}"))
            if failed:
                skips.extend({"case_id": case.case_id, "valid_time": case.valid_time, "method": m, "reason": r} for m, r in failed)
                continue
            records.append(
                {
                    "case_id": case.case_id,
                    "valid_time": case.valid_time,
                    "station": case.station,
                    "observation": case.observation,
                    "scores": scores,
                }
            )
        return records, skips, {k: v.to_dict() for k, v in fits.items()}

    indices = range(start, len(dates))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run_date, indices))
    else:
        results = [run_date(t) for t in indices]

    records = [r for res in results for r in res[0]]
    skips = [s for res in results for s in res[1]]
    if skips:
        log.warning("skipped %d case/method evaluations", len(skips))
    metadata = {
        "train_len_bma": config.train_len_bma,
        "train_len_emos": config.train_len_emos,
        "window_unit": "distinct valid dates",
        "pooling": "regional (all stations share parameters)",
        "emos_objective": "minimum mean logarithmic score",
        "bma_fit": "OLS start, EM with responsibility-weighted bias refit",
        "variance_convention": "population (divisor k)",
        "first_evaluated_date": dates[start] if start < len(dates) else None,
        "n_dates_evaluated": max(0, len(dates) - start),
        "scores": list(config.scores),
    }
    return ScoreReport(methods, [c for c, _ in scorers], records, skips, metadata)
