"""One row of experiment output and its CSV encoding."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields


@dataclass
class MetricsRow:
    technique: str
    seed: int
    T: float
    E_tot: float
    sigma: float = 0.0
    covered: int = 0
    M: int = 0
    energy_used: float = float("nan")
    iterations: int = 0
    min_excess: float = float("nan")
    termination: str = ""
    realized_coverage: float = float("nan")   # mean covered fraction over sampled true locations
    all_covered_fraction: float = float("nan")  # share of samples keeping every planned user covered
    wall_time: float = 0.0
    error: str = ""

    def __post_init__(self):
        if self.M and not 0 <= self.covered <= self.M:
            raise ValueError("covered count outside [0, M]")

    @property
    def coverage_probability(self) -> float:
        return self.covered / self.M if self.M else float("nan")

    @property
    def key(self) -> tuple:
        return (self.technique, self.seed, self.T, self.E_tot, self.sigma)


# wall time is kept out of the metrics table so reruns are byte-identical
CSV_COLUMNS = ["technique", "seed", "T", "E_tot", "sigma", "coverage_probability", "covered", "M",
               "energy_used", "iterations", "min_excess", "realized_coverage", "all_covered_fraction",
               "termination", "error"]
TIMING_COLUMNS = ["technique", "seed", "T", "E_tot", "sigma", "wall_time"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(rows, path, columns=CSV_COLUMNS) -> None:
    rows = sorted(rows, key=lambda r: r.key)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in columns])


_TYPES = {f.name: f.type for f in fields(MetricsRow)}


def read_csv(path) -> list[MetricsRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for k, v in rec.items():
                if k not in _TYPES:
                    continue
                kind = _TYPES[k]
                if kind == "int":
                    kw[k] = int(v)
                elif kind == "float":
                    kw[k] = float(v) if v != "" else float("nan")
                else:
                    kw[k] = v
            out.append(MetricsRow(**kw))
    return out


def as_dict(row: MetricsRow) -> dict:
    d = asdict(row)
    d["coverage_probability"] = row.coverage_probability
    return d
