"""Ensemble forecast cases and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import InconsistentEnsembleSize, ParseError

FIXED_COLUMNS = ("case_id", "valid_time", "station", "obs")


@dataclass(frozen=True)
class ForecastCase:
    case_id: str
    valid_time: str
    station: str
    ensemble: tuple[float, ...]
    observation: Optional[float] = None

    def __post_init__(self):
        if len(self.ensemble) < 2:
            raise ParseError(f"case {self.case_id}: need at least 2 members, got {len(self.ensemble)}")
        if not all(math.isfinite(v) for v in self.ensemble):
            raise ParseError(f"case {self.case_id}: ensemble values must be finite")

    @property
    def k(self):
        return len(self.ensemble)

    @property
    def date(self):
        """Calendar date of ``valid_time``; windows are counted in these."""
        return self.valid_time[:10]

    @property
    def has_observation(self):
        return self.observation is not None


def ensemble_matrix(cases: Sequence[ForecastCase]):
    """``(F, y)`` for the cases that carry observations."""
    rows = [c for c in cases if c.has_observation]
    if not rows:
        return np.empty((0, cases[0].k if cases else 0)), np.empty(0)
    return np.array([c.ensemble for c in rows], dtype=float), np.array([c.observation for c in rows], dtype=float)


def _float(text, name, line):
    if text.strip() == "":
        raise ParseError(f"empty {name}", line)
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{name} is not a number: {text!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"{name} is not finite: {text!r}", line)
    return v


def load_cases(path) -> list[ForecastCase]:
    """Read ``case_id,valid_time,station,obs,f1..fk``; an empty ``obs`` means no observation."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if tuple(header[:4]) != FIXED_COLUMNS:
            raise ParseError(f"header must start with {','.join(FIXED_COLUMNS)}, got {','.join(header[:4])}", 1)
        members = header[4:]
        if members != [f"f{i}" for i in range(1, len(members) + 1)] or len(members) < 2:
            raise ParseError("member columns must be f1..fk with k >= 2", 1)
        k = len(members)
        cases = []
        for row in reader:
            line = reader.line_num
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != 4 + k:
                raise InconsistentEnsembleSize(f"expected {4 + k} fields, got {len(row)}", line)
            case_id, valid_time, station, obs = (v.strip() for v in row[:4])
            ens = tuple(_float(v, f"f{i}", line) for i, v in enumerate(row[4:], 1))
            cases.append(ForecastCase(case_id, valid_time, station, ens, None if obs == "" else _float(obs, "obs", line)))
    return cases


def write_cases(path, cases: Sequence[ForecastCase]):
    """Inverse of :func:`load_cases`; floats are written with ``repr`` so reading back is exact."""
    k = cases[0].k if cases else 2
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*FIXED_COLUMNS, *(f"f{i}" for i in range(1, k + 1))])
        for c in cases:
            obs = "" if c.observation is None else repr(float(c.observation))
            w.writerow([c.case_id, c.valid_time, c.station, obs, *(repr(float(v)) for v in c.ensemble)])
