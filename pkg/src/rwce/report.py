"""Report assembly and deterministic serialization.

JSON output uses stable snake_case keys in insertion order, floats written
with 17 significant digits, and no timestamps, so re-emitting the same
report yields identical bytes.  Non-finite floats are written as the strings
``"inf"``, ``"-inf"`` and ``"nan"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import __version__

SCHEMA_VERSION = "1"

LEDGER_COLUMNS = ("criterion", "check", "paper_anchor", "measured", "relation", "threshold", "passed")


@dataclass(frozen=True)
class CheckRow:
    """One ledger entry; ``passed`` is recomputed from the recorded numbers."""

    criterion: int | None
    check: str
    paper_anchor: str
    measured: float
    threshold: float
    relation: str = "<="

    @property
    def passed(self) -> bool:
        m, t = float(self.measured), float(self.threshold)
        if math.isnan(m):
            return False
        if self.relation == "<=":
            return m <= t
        if self.relation == ">=":
            return m >= t
        if self.relation == ">":
            return m > t
        if self.relation == "==":
            return m == t
        raise ValueError(f"unknown relation {self.relation!r}")

    def as_dict(self) -> dict:
        return {"criterion": self.criterion, "check": self.check, "paper_anchor": self.paper_anchor,
                "measured": float(self.measured), "relation": self.relation,
                "threshold": float(self.threshold), "passed": self.passed}


def new_report(subcommand: str, cfg) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "provenance": {"config_hash": cfg.digest(), "seed": cfg.seed, "artifact_version": __version__},
        "config": cfg.to_dict(),
        "profile": None,
        "slowness": None,
        "ratio_certificates": None,
        "simulation": None,
        "classification": None,
        "ledger": [],
        "all_passed": True,
        "truncation": None,
    }


def add_rows(report: dict, rows) -> None:
    for r in rows:
        d = r.as_dict() if isinstance(r, CheckRow) else dict(r)
        report["ledger"].append(d)
    report["all_passed"] = all(r["passed"] for r in report["ledger"])


def merge(reports: list, subcommand: str = "report") -> dict:
    """Combine pipeline outputs; later non-null sections win, ledgers concatenate."""
    out = dict(reports[0])
    out["subcommand"] = subcommand
    out["ledger"] = []
    for r in reports:
        for k, v in r.items():
            if k in ("ledger", "subcommand", "all_passed"):
                continue
            if v is not None:
                out[k] = v
        out["ledger"].extend(r["ledger"])
    out["all_passed"] = all(r["passed"] for r in out["ledger"])
    return out


# ---------------------------------------------------------------------------
# serialization

def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_json(obj, indent: int = 2) -> str:
    """Serialize ``obj`` deterministically (see module docstring)."""
    out: list[str] = []

    def emit(o, level):
        o = _plain(o)
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            out.append("null")
        elif isinstance(o, bool):
            out.append("true" if o else "false")
        elif isinstance(o, int):
            out.append(str(o))
        elif isinstance(o, float):
            out.append(_num(o))
        elif isinstance(o, str):
            out.append(json.dumps(o))
        elif isinstance(o, dict):
            if not o:
                out.append("{}")
                return
            out.append("{\n")
            for i, (k, v) in enumerate(o.items()):
                out.append(pad + json.dumps(str(k)) + ": ")
                emit(v, level + 1)
                out.append(",\n" if i < len(o) - 1 else "\n")
            out.append(end + "}")
        elif isinstance(o, (list, tuple)):
            if not o:
                out.append("[]")
                return
            if all(isinstance(_plain(v), (int, float, bool, type(None), str)) for v in o):
                out.append("[")
                for i, v in enumerate(o):
                    emit(v, level + 1)
                    if i < len(o) - 1:
                        out.append(", ")
                out.append("]")
                return
            out.append("[\n")
            for i, v in enumerate(o):
                out.append(pad)
                emit(v, level + 1)
                out.append(",\n" if i < len(o) - 1 else "\n")
            out.append(end + "]")
        else:
            raise TypeError(f"cannot serialize {type(o).__name__}")

    emit(obj, 0)
    out.append("\n")
    return "".join(out)


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _num(v).strip('"')
    if v is None:
        return ""
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def profile_csv(report: dict) -> str:
    prof = report.get("profile") or {"radii": [], "effective_resistance": []}
    return _csv(("radius", "effective_resistance"), zip(prof["radii"], prof["effective_resistance"]))


def ledger_csv(report: dict) -> str:
    return _csv(LEDGER_COLUMNS, ([r[c] for c in LEDGER_COLUMNS] for r in report["ledger"]))


def emit(report: dict, out_dir, fmt: str = "json") -> list[str]:
    """Write the report files into ``out_dir`` and return their paths.

    ``json`` writes ``report.json``; ``csv`` writes ``profile.csv`` and
    ``ledger.csv``.  Raises ``OSError`` when the directory is not writable.
    """
    os.makedirs(out_dir, exist_ok=True)
    files = {"json": {"report.json": to_json(report)},
             "csv": {"profile.csv": profile_csv(report), "ledger.csv": ledger_csv(report)}}[fmt]
    paths = []
    for name, text in files.items():
        p = os.path.join(out_dir, name)
        with open(p, "w", newline="") as fh:
            fh.write(text)
        paths.append(p)
    return paths
