"""Evaluation report rows, their CSV form, and per-method summaries."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import CSVParseError

COLUMNS = ("method", "pair_id", "episode", "iterations", "travel_m", "final_rank", "terminated")


@dataclass(frozen=True, order=True)
class ReportRow:
    method: str
    pair_id: int
    episode: int
    iterations: int
    travel_m: float
    final_rank: int
    terminated: bool


assert tuple(f.name for f in fields(ReportRow)) == COLUMNS


def _cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(rows, path):
    rows = sorted(rows, key=lambda r: (r.method, r.pair_id, r.episode))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_cell(v) for v in astuple(r)])


def _parse_row(cells, line):
    if len(cells) != len(COLUMNS):
        raise CSVParseError(line, f"expected {len(COLUMNS)} columns, found {len(cells)}")
    method, pair_id, episode, iterations, travel, rank, term = cells
    try:
        row = ReportRow(method, int(pair_id), int(episode), int(iterations), float(travel), int(rank),
                        {"1": True, "0": False, "true": True, "false": False}[term.strip().lower()])
    except (ValueError, KeyError) as exc:
        raise CSVParseError(line, f"bad value ({exc})") from None
    if not method:
        raise CSVParseError(line, "empty method name")
    if row.final_rank < 1 or row.iterations < 0 or not np.isfinite(row.travel_m) or row.travel_m < 0:
        raise CSVParseError(line, "value out of range")
    return row


def parse_report(text):
    """Rows of a report CSV; errors name the 1-based line."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CSVParseError(1, "empty file") from None
    if tuple(h.strip() for h in header) != COLUMNS:
        raise CSVParseError(1, f"header must be {','.join(COLUMNS)}")
    rows = []
    for cells in reader:
        if not cells:
            continue
        rows.append(_parse_row(cells, reader.line_num))
    if not rows:
        raise CSVParseError(2, "report has no data rows")
    return rows


def read_report(path):
    with open(path, newline="") as fh:
        return parse_report(fh.read())


@dataclass(frozen=True)
class MethodSummary:
    method: str
    episodes: int
    mean_iterations: float
    mean_travel: float
    mean_rank: float
    termination_rate: float


def summarize(rows):
    """Per-method means, in first-appearance order of the methods."""
    by_method = {}
    for r in rows:
        by_method.setdefault(r.method, []).append(r)
    out = []
    for method, rs in by_method.items():
        out.append(MethodSummary(
            method,
            len(rs),
            float(np.mean([r.iterations for r in rs])),
            float(np.mean([r.travel_m for r in rs])),
            float(np.mean([r.final_rank for r in rs])),
            float(np.mean([r.terminated for r in rs])),
        ))
    return out


def format_summary(summaries):
    lines = [f"{'method':<20} {'episodes':>8} {'iterations':>10} {'travel_m':>9} {'rank':>7} {'terminated':>10}"]
    for s in summaries:
        lines.append(
            f"{s.method:<20} {s.episodes:>8d} {s.mean_iterations:>10.3f} {s.mean_travel:>9.2f} "
            f"{s.mean_rank:>7.3f} {s.termination_rate:>10.3f}"
        )
    return "\n".join(lines)
