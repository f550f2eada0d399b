"""Two-column plot data and gnuplot stubs from trajectories and probe reports."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import IoError

KINDS = ("energy", "pl", "bounds", "exponent")


def _rows(traj):
    if hasattr(traj, "rows"):
        return list(traj.rows())
    return list(traj)


def _series(traj, kind):
    if kind == "exponent":
        if hasattr(traj, "derivative"):
            t, d = np.asarray(traj.t, float), np.asarray(traj.derivative, float)
        else:
            rows = _rows(traj)
            t = np.array([r["t"] for r in rows], float)
            d = np.array([r["derivative"] for r in rows], float)
        return [("exponent", t, -d)]
    rows = _rows(traj)
    t = np.array([r["t"] for r in rows], float)
    if kind == "energy":
        e = np.array([r["energy"] for r in rows], float)
        with np.errstate(divide="ignore", invalid="ignore"):
            loge = np.where(e > 0, np.log(np.where(e > 0, e, 1.0)), np.nan)
        return [("energy", t, e), ("log_energy", t, loge)]
    if kind == "pl":
        return [("pl", t, np.array([r["pl_ratio"] for r in rows], float))]
    return [
        ("min_f", t, np.array([r["min_f"] for r in rows], float)),
        ("max_f", t, np.array([r["max_f"] for r in rows], float)),
    ]


def _csv_text(t, v):
    buf = io.StringIO()
    buf.write("t,value\n")
    for a, b in zip(t, v):
        buf.write(f"{float(a)!r},{float(b)!r}\n")
    return buf.getvalue()


def _gnuplot(kind, names):
    logscale = {"energy": "set logscale y\n", "exponent": "set logscale xy\n"}.get(kind, "")
    plots = ", \\\n     ".join(f"'{n}' using 1:2 with linespoints title '{n.rsplit('.', 1)[0]}'" for n in names)
    return f"set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\n{logscale}plot {plots}\n"


def emit_plotdata(traj, kind: str, out_dir, stem: str = "plot") -> list[Path]:
    """Write ``<stem>_<series>.csv`` files with columns ``t,value`` and ``<stem>_<kind>.gp``.

    ``traj`` is a ``Trajectory`` (or an iterable of its row dicts); for
    ``kind="exponent"`` it may also be a probe report with ``t`` and
    ``derivative`` arrays, and the value column holds ``-dE/dt``.  Nothing is
    written when the input is empty; a failed write removes the files already
    created.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    series = _series(traj, kind)
    if not series or len(series[0][1]) == 0:
        raise IoError("empty trajectory: nothing to plot")
    out = Path(out_dir)
    files = {f"{stem}_{name}.csv": _csv_text(t, v) for name, t, v in series}
    files[f"{stem}_{kind}.gp"] = _gnuplot(kind, [n for n in files])
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            path = out / name
            path.write_text(text)
            written.append(path)
    except OSError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise IoError(str(exc)) from exc
    return written
