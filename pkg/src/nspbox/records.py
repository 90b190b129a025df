"""Norm time-series records and their NDJSON / CSV serialization.

One NDJSON object per monitored instant, keys in a fixed documented order;
floats are emitted with shortest round-trip representation so read-back is
exact.  The CSV companion carries the scalar columns only, with one fixed
schema across all configurations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .energy import EnergyReport

__all__ = ["NormRecord", "record_from_report", "write_records", "read_records", "CSV_COLUMNS"]

ALPHA_CUTOFF = 1e-14

NDJSON_KEYS = (
    "t",
    "hybrid_h",
    "hybrid_c",
    "hybrid_I",
    "hybrid_u",
    "V",
    "E",
    "alpha",
    "positivity",
    "guarded",
)

CSV_COLUMNS = ("t", "hybrid_h", "hybrid_c", "hybrid_I", "hybrid_u", "V", "E", "positivity", "guarded")


@dataclass
class NormRecord:
    t: float
    hybrid_h: float
    hybrid_c: float
    hybrid_I: float
    hybrid_u: float
    V: float
    E: float
    alpha: list  # [k, alpha_k^2] pairs for shells above the cutoff
    positivity: bool
    guarded: bool


def record_from_report(report: EnergyReport, positivity: bool = True, guarded: bool = False) -> NormRecord:
    alpha = [[sh.k, sh.alpha_sq] for sh in report.shells if sh.alpha_sq > ALPHA_CUTOFF]
    return NormRecord(
        t=report.t,
        hybrid_h=report.hybrid_h,
        hybrid_c=report.hybrid_c,
        hybrid_I=report.hybrid_I,
        hybrid_u=report.hybrid_u,
        V=report.v_accum,
        E=report.e_value,
        alpha=alpha,
        positivity=positivity,
        guarded=guarded,
    )


def _as_dict(rec: NormRecord) -> dict:
    return {
        "t": rec.t,
        "hybrid_h": rec.hybrid_h,
        "hybrid_c": rec.hybrid_c,
        "hybrid_I": rec.hybrid_I,
        "hybrid_u": rec.hybrid_u,
        "V": rec.V,
        "E": rec.E,
        "alpha": rec.alpha,
        "positivity": rec.positivity,
        "guarded": rec.guarded,
    }


def write_records(records: list[NormRecord], path, csv_path=None) -> None:
    """Write NDJSON (one record per line) plus a CSV companion."""
    last_t = None
    for rec in records:
        if last_t is not None and rec.t <= last_t:
            raise ValueError("records must be strictly increasing in time")
        last_t = rec.t
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(_as_dict(rec)) + "\n")
        if csv_path is None:
            csv_path = str(path) + ".csv"
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for rec in records:
                row = _as_dict(rec)
                fh.write(",".join(_csv_cell(row[col]) for col in CSV_COLUMNS) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing records to {path}: {exc}") from exc


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_records(path) -> list[NormRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(NormRecord(**{k: d[k] for k in ("t", "hybrid_h", "hybrid_c", "hybrid_I", "hybrid_u")},
                                  V=d["V"], E=d["E"], alpha=d["alpha"],
                                  positivity=d["positivity"], guarded=d["guarded"]))
    return out
