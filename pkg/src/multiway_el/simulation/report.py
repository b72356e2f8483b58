"""CSV and text-table rendering of coverage reports."""

from __future__ import annotations

import csv
import io
import math

from .experiment import METHODS

__all__ = ["CSV_FIELDS", "format_table", "read_report_csv", "reports_to_csv"]

CSV_FIELDS = ("dgp", "N", "M", "T", "param_name", "param", "method", "level",
              "replications", "covered", "coverage", "mc_se", "failures",
              "failure_detail", "flagged")

_PARAM_LABEL = {"sigma2": "σ²", "theta": "θ"}
_DGP_TITLE = {
    "random_effect": "random effect model",
    "sbm": "stochastic block model",
    "threeway_random_effect": "three-way random effect model",
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def reports_to_csv(reports) -> str:
    """One row per cell and method; floats printed with 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rep in reports:
        for row in rep.rows():
            w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def read_report_csv(text: str) -> list[dict]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        missing = [k for k in CSV_FIELDS if k not in row]
        if missing:
            raise ValueError(f"report CSV lacks columns {missing}")
        row = dict(row)
        for k in ("N", "M", "replications", "covered", "failures"):
            row[k] = int(row[k])
        row["T"] = int(row["T"]) if row["T"] else None
        for k in ("param", "level", "coverage", "mc_se"):
            row[k] = float(row[k])
        row["flagged"] = row["flagged"] == "1"
        rows.append(row)
    return rows


def _num(x: float) -> str:
    return "%.3f" % x if not math.isnan(x) else "  -  "


def _param_str(x: float) -> str:
    return "%g" % x


def format_table(rows, title: str | None = None) -> str:
    """Coverage table with one line per (M, parameter) and one column per method.

    ``rows`` are dictionaries as produced by :func:`read_report_csv` or
    ``CoverageReport.rows``.  Flagged cells (over 1% failures) carry a ``*``.
    """
    rows = list(rows)
    if not rows:
        return (title or "Coverage rates") + "\n(no cells)\n"
    methods = []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
    methods.sort(key=lambda m: METHODS.index(m) if m in METHODS else len(METHODS))
    pname = rows[0]["param_name"]
    plabel = _PARAM_LABEL.get(pname, pname)
    cells = {}
    for r in rows:
        key = (r["N"], r["M"], r["T"], r["param"])
        cells.setdefault(key, {})[r["method"]] = r
    if title is None:
        first = rows[0]
        extents = f"N={first['N']}" + (f", T={first['T']}" if first["T"] else "")
        title = f"Coverage rates for {_DGP_TITLE.get(first['dgp'], first['dgp'])} with {extents}"
    width = 7
    header = f"{'M':>4} | {plabel:>5} | " + " ".join(f"{m:>{width}}" for m in methods)
    lines = [title, header, "-" * len(header)]
    # M ascending, parameter as listed descending (1, 0.1, 0 / 0.5, 0.1, 0.05)
    for key in sorted(cells, key=lambda k: (k[1], -k[3])):
        entry = cells[key]
        vals = []
        for m in methods:
            r = entry.get(m)
            if r is None:
                vals.append(f"{'':>{width}}")
            else:
                mark = "*" if r["flagged"] else " "
                vals.append(f"{_num(r['coverage']):>{width - 1}}{mark}")
        lines.append((f"{key[1]:>4} | {_param_str(key[3]):>5} | " + " ".join(vals)).rstrip())
    reps = sorted({r["replications"] for r in rows})
    lines.append(f"replications: {', '.join(map(str, reps))}; nominal level {rows[0]['level']:g}")
    if any(r["flagged"] for r in rows):
        lines.append("* more than 1% of replications failed for this method")
    return "\n".join(lines) + "\n"
