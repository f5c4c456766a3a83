"""Per-step diagnostic records and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    time: float
    area: float
    area_loss_rel: float
    energy: float
    energy_norm: float
    mesh_ratio: float
    newton_iters: int
    residual: float


CSV_COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


def _fmt(v):
    return str(v) if isinstance(v, int) else f"{v:.17g}"


def write_records(path_or_file, records):
    """Write records as CSV with a fixed header; floats use 17 significant digits."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in astuple(r)])
    finally:
        if own:
            fh.close()


def read_records(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(
            DiagnosticsRecord(
                **{k: (int(v) if k in ("step", "newton_iters") else float(v)) for k, v in row.items()}
            )
        )
    return out
