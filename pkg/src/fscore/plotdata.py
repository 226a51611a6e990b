"""Plot-ready CSV series derived from a results file (data only, no rendering)."""

import csv
from pathlib import Path

import numpy as np

from .errors import MissingColumn

KINDS = {
    "residual_vs_h": ("group", "fd_step", "residual"),
    "objective_vs_iteration": ("iter", "objective"),
    "constant_vs_case": ("case", "constant"),
}


def read_results(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    if not lines:
        return [], []
    reader = csv.DictReader(lines)
    return list(reader.fieldnames or []), list(reader)


def _require(columns, needed, path):
    missing = [c for c in needed if c not in columns]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")


def emit_plot_data(results_path, kind, out_path=None):
    """Write the ``kind`` series next to ``results_path``; return ``(path, info)``.

    ``info`` carries the fitted log-log slope for ``residual_vs_h`` and a
    monotonicity flag for ``objective_vs_iteration``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {sorted(KINDS)}")
    results_path = Path(results_path)
    columns, rows = read_results(results_path)
    _require(columns, KINDS[kind], results_path)
    out_path = Path(out_path) if out_path else results_path.with_name(f"{results_path.stem}.{kind}.csv")
    info = {}
    if kind == "residual_vs_h":
        header = ["group", "fd_step", "residual", "log10_h", "log10_residual"]
        data, slopes = [], {}
        for r in rows:
            h, res = float(r["fd_step"]), float(r["residual"])
            if res > 0:
                data.append([r["group"], h, res, np.log10(h), np.log10(res)])
        for g in dict.fromkeys(d[0] for d in data):
            pts = [(d[3], d[4]) for d in data if d[0] == g]
            if len(pts) >= 2:
                x, y = np.array(pts).T
                slopes[g] = float(np.polyfit(x, y, 1)[0])
        info["slopes"] = slopes
        info["slope"] = float(np.mean(list(slopes.values()))) if slopes else float("nan")
        comment = f"# slope={info['slope']!r}"
    elif kind == "objective_vs_iteration":
        header = ["iter", "objective"]
        data = [[int(r["iter"]), float(r["objective"])] for r in rows]
        obj = np.array([d[1] for d in data])
        info["monotone"] = bool(np.all(np.diff(obj) <= 0))
        comment = f"# monotone={str(info['monotone']).lower()}"
    else:
        header = ["case", "constant"]
        data = [[int(r["case"]), float(r["constant"])] for r in rows if r["constant"] != ""]
        consts = np.array([d[1] for d in data])
        info["mean_constant"] = float(consts.mean()) if consts.size else float("nan")
        comment = f"# mean_constant={info['mean_constant']!r}"
    with open(out_path, "w", newline="") as fh:
        fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for d in data:
            w.writerow([repr(x) if isinstance(x, float) else x for x in d])
    return out_path, info
