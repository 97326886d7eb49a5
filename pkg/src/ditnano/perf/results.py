"""Experiment tables: ``DesignPoint`` rows and their CSV form.

CSV header: ``name,d,w,h,params,latency_s,fid[,is]``. Geometry not present in
the file (patch size, image size, classes) takes the ``DitConfig`` defaults.
Two transcriptions ship with the package: ``table2`` (the 0.42M ablation) and
``table5`` (every parameter class; its ``params`` column holds the nominal
size class, not an exact count).
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from ..arch_plan import DitConfig
from ..errors import ConfigError, FormatError, ValidationError
from ..fileio import atomic_write_text

BASE_COLUMNS = ("name", "d", "w", "h", "params", "latency_s", "fid")
BUNDLED = ("table2", "table5")


@dataclass(frozen=True)
class DesignPoint:
    name: str
    cfg: DitConfig
    params: int
    latency: float
    fid: float
    inception: float | None = None

    def __post_init__(self):
        if self.params <= 0:
            raise ValidationError(f"{self.name}: params must be positive, got {self.params}")
        for label, v in (("latency", self.latency), ("fid", self.fid)):
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{self.name}: {label} must be positive and finite, got {v}")
        if self.inception is not None and not math.isfinite(self.inception):
            raise ValidationError(f"{self.name}: inception score must be finite")

    @property
    def objectives(self) -> tuple[float, float, float]:
        return (float(self.params), self.latency, self.fid)


def _parse_int(text: str, col: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"column {col!r}: expected an integer, got {text!r}") from None


def _parse_float(text: str, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"column {col!r}: expected a number, got {text!r}") from None


def parse_results(text: str, source: str = "<string>") -> list[DesignPoint]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise FormatError(f"{source}: empty results file") from None
    has_is = header == [*BASE_COLUMNS, "is"]
    if list(header) != list(BASE_COLUMNS) and not has_is:
        raise FormatError(f"{source} line 1: header must be {','.join(BASE_COLUMNS)}[,is], got {','.join(header)}")
    points = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"{source} line {line}: expected {len(header)} fields, got {len(row)}")
        row = [c.strip() for c in row]
        try:
            d, w, h = (_parse_int(row[i], BASE_COLUMNS[i]) for i in (1, 2, 3))
            params = _parse_int(row[4], "params")
            latency = _parse_float(row[5], "latency_s")
            fid = _parse_float(row[6], "fid")
            inception = _parse_float(row[7], "is") if has_is and row[7] else None
        except ValueError as exc:
            raise FormatError(f"{source} line {line}: {exc}") from None
        try:
            cfg = DitConfig(depth=d, width=w, heads=h)
            points.append(DesignPoint(row[0], cfg, params, latency, fid, inception))
        except (ConfigError, ValidationError) as exc:
            raise ValidationError(f"{source} line {line}: {exc}") from None
    return points


def load_results_csv(path: str | os.PathLike) -> list[DesignPoint]:
    path = Path(path)
    return parse_results(path.read_text(encoding="utf-8"), str(path))


def format_results(points: Iterable[DesignPoint]) -> str:
    points = list(points)
    with_is = any(p.inception is not None for p in points)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*BASE_COLUMNS, "is"] if with_is else BASE_COLUMNS)
    for p in points:
        row = [p.name, p.cfg.depth, p.cfg.width, p.cfg.heads, p.params, repr(p.latency), repr(p.fid)]
        if with_is:
            row.append("" if p.inception is None else repr(p.inception))
        writer.writerow(row)
    return buf.getvalue()


def write_results_csv(path: str | os.PathLike, points: Iterable[DesignPoint]) -> None:
    atomic_write_text(path, format_results(points))


def bundled_table(name: str) -> list[DesignPoint]:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled table {name!r}; choose from {BUNDLED}")
    text = resources.files("ditnano.perf").joinpath("data", f"{name}.csv").read_text(encoding="utf-8")
    return parse_results(text, f"{name}.csv")


def frontier_gnuplot(points: Iterable[DesignPoint]) -> str:
    """Whitespace table ``params latency fid name`` for external plotting."""
    lines = ["# params latency_s fid name"]
    lines += [f"{p.params} {p.latency!r} {p.fid!r} {p.name}" for p in points]
    return "\n".join(lines) + "\n"
