"""File formats: CSV traces and logs, JSONL arrivals, folded-tensor export.

All floats are rendered with 17 significant digits so every file
round-trips 64-bit values exactly; files are UTF-8 with LF line endings.
Parsers fail fast with the offending line number.
"""

from __future__ import annotations

import json
import math
import os
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError

TRAJECTORY_HEADER = "t_s,x_m,y_m,vx_mps,vy_mps,label"
ESTIMATES_HEADER = "t_s,x_m,y_m"
PREDICTIONS_HEADER = "t_s,xhat_m,yhat_m,xtilde_m,ytilde_m"
DECISIONS_HEADER = "run_id,t_s,E_m2,decision,truth"
DET_HEADER = "lambda_m2,p_fa,p_md"

_REL_TOL_SPACING = 1e-9


def fmt(x: float) -> str:
    """17-significant-digit decimal rendering of a 64-bit float."""
    return format(float(x), ".17g")


def _open_w(path: str):
    return open(path, "w", encoding="utf-8", newline="\n")


def _float_field(path: str, lineno: int, name: str, raw: str,
                 allow_nonfinite: bool = False) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ParseError(path, lineno, f"cannot parse {name} from {raw!r}") from None
    if not allow_nonfinite and not math.isfinite(v):
        raise ParseError(path, lineno, f"non-finite {name}: {raw!r}")
    return v


def _read_rows(path: str, header: str) -> list[tuple[int, list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, 0, "empty file")
    if lines[0] != header:
        raise ParseError(path, 1, f"expected header {header!r}, got {lines[0]!r}")
    n_fields = header.count(",") + 1
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != n_fields:
            raise ParseError(path, lineno, f"expected {n_fields} fields, got {len(fields)}")
        rows.append((lineno, fields))
    if not rows:
        raise ParseError(path, len(lines), "no data rows")
    return rows


def _check_time_axis(path: str, times: Sequence[tuple[int, float]]):
    for (l_prev, t_prev), (l_cur, t_cur) in zip(times, times[1:]):
        if t_cur <= t_prev:
            raise ParseError(path, l_cur, f"non-monotone timestamp {fmt(t_cur)} after {fmt(t_prev)}")
    if len(times) >= 3:
        spacing = times[1][1] - times[0][1]
        for (_, t_prev), (l_cur, t_cur) in zip(times[1:], times[2:]):
            if abs((t_cur - t_prev) - spacing) > _REL_TOL_SPACING * max(1.0, abs(spacing)):
                raise ParseError(path, l_cur,
                                 f"irregular sampling: step {fmt(t_cur - t_prev)} != {fmt(spacing)}")


# ---------------------------------------------------------------- trajectories

def write_trajectory_csv(path: str, times, positions, velocities, labels):
    with _open_w(path) as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for t, p, v, lab in zip(times, positions, velocities, labels):
            fh.write(f"{fmt(t)},{fmt(p[0])},{fmt(p[1])},{fmt(v[0])},{fmt(v[1])},{int(lab)}\n")


def read_trajectory_csv(path: str):
    """Returns (times, positions, velocities, labels) as numpy arrays."""
    rows = _read_rows(path, TRAJECTORY_HEADER)
    times, pos, vel, labels = [], [], [], []
    for lineno, f in rows:
        times.append((lineno, _float_field(path, lineno, "t_s", f[0])))
        pos.append((_float_field(path, lineno, "x_m", f[1]),
                    _float_field(path, lineno, "y_m", f[2])))
        vel.append((_float_field(path, lineno, "vx_mps", f[3]),
                    _float_field(path, lineno, "vy_mps", f[4])))
        if f[5] not in ("0", "1"):
            raise ParseError(path, lineno, f"label must be 0 or 1, got {f[5]!r}")
        labels.append(int(f[5]))
    _check_time_axis(path, times)
    return (np.array([t for _, t in times]), np.array(pos), np.array(vel),
            np.array(labels, dtype=np.int64))


# ------------------------------------------------------------------- estimates

def write_estimates_csv(path: str, estimates):
    with _open_w(path) as fh:
        fh.write(ESTIMATES_HEADER + "\n")
        for e in estimates:
            fh.write(f"{fmt(e.t)},{fmt(e.p[0])},{fmt(e.p[1])}\n")


def read_estimates_csv(path: str) -> list[tuple[float, float, float]]:
    rows = _read_rows(path, ESTIMATES_HEADER)
    times, out = [], []
    for lineno, f in rows:
        t = _float_field(path, lineno, "t_s", f[0])
        x = _float_field(path, lineno, "x_m", f[1])
        y = _float_field(path, lineno, "y_m", f[2])
        times.append((lineno, t))
        out.append((t, x, y))
    _check_time_axis(path, times)
    return out


# ----------------------------------------------------------------- predictions

def write_predictions_csv(path: str, rows: Iterable[tuple[float, float, float, float, float]]):
    with _open_w(path) as fh:
        fh.write(PREDICTIONS_HEADER + "\n")
        for t, xh, yh, xt, yt in rows:
            fh.write(f"{fmt(t)},{fmt(xh)},{fmt(yh)},{fmt(xt)},{fmt(yt)}\n")


def read_predictions_csv(path: str) -> list[tuple[float, float, float, float, float]]:
    rows = _read_rows(path, PREDICTIONS_HEADER)
    times, out = [], []
    for lineno, f in rows:
        vals = [_float_field(path, lineno, name, raw)
                for name, raw in zip(PREDICTIONS_HEADER.split(","), f)]
        times.append((lineno, vals[0]))
        out.append(tuple(vals))
    _check_time_axis(path, times)
    return out


# ------------------------------------------------------------------- decisions

def write_decisions_csv(path: str, rows: Iterable[tuple[str, float, float, int | None, int]]):
    """Rows are (run_id, t_s, E_m2, decision, truth); decision None during warm-up."""
    with _open_w(path) as fh:
        fh.write(DECISIONS_HEADER + "\n")
        for run_id, t, e, decision, truth in rows:
            d = "" if decision is None else str(int(decision))
            fh.write(f"{run_id},{fmt(t)},{fmt(e)},{d},{int(truth)}\n")


def read_decisions_csv(path: str) -> list[tuple[str, float, float, int | None, int]]:
    rows = _read_rows(path, DECISIONS_HEADER)
    out = []
    for lineno, f in rows:
        t = _float_field(path, lineno, "t_s", f[1])
        e = _float_field(path, lineno, "E_m2", f[2])
        if f[3] not in ("", "0", "1"):
            raise ParseError(path, lineno, f"decision must be empty, 0 or 1, got {f[3]!r}")
        if f[4] not in ("0", "1"):
            raise ParseError(path, lineno, f"truth must be 0 or 1, got {f[4]!r}")
        decision = None if f[3] == "" else int(f[3])
        out.append((f[0], t, e, decision, int(f[4])))
    return out


# ------------------------------------------------------------------- DET curve

def write_det_csv(path: str, points: Iterable[tuple[float, float, float]]):
    with _open_w(path) as fh:
        fh.write(DET_HEADER + "\n")
        for lam, p_fa, p_md in points:
            fh.write(f"{fmt(lam)},{fmt(p_fa)},{fmt(p_md)}\n")


def read_det_csv(path: str) -> list[tuple[float, float, float]]:
    rows = _read_rows(path, DET_HEADER)
    out = []
    for lineno, f in rows:
        lam = _float_field(path, lineno, "lambda_m2", f[0], allow_nonfinite=True)
        if math.isnan(lam):
            raise ParseError(path, lineno, "NaN threshold")
        p_fa = _float_field(path, lineno, "p_fa", f[1])
        p_md = _float_field(path, lineno, "p_md", f[2])
        out.append((lam, p_fa, p_md))
    return out


# ------------------------------------------------------------- arrivals (JSONL)

def write_arrivals_jsonl(path: str, records):
    """records: iterable of (t_idx, rx, ArrivalSet), written in given order."""
    with _open_w(path) as fh:
        for t_idx, rx, arr in records:
            obj = {"t_idx": int(t_idx), "rx": int(rx),
                   "arrivals": [{"re": float(a.real), "im": float(a.imag),
                                 "tau_s": float(tau)}
                                for a, tau in zip(arr.amplitudes, arr.delays)]}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _reject_constant(value):
    raise ValueError(f"non-finite literal {value!r}")


def parse_arrivals_jsonl(path: str) -> dict[tuple[int, int], list[tuple[complex, float]]]:
    """Validated ordered map (t_idx, rx) -> [(amplitude, delay)].

    Rejects malformed JSON, NaN/Inf values, duplicate (t_idx, rx) keys and
    t_idx regressions, each with the offending line number.
    """
    out: dict[tuple[int, int], list[tuple[complex, float]]] = {}
    last_t = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line, parse_constant=_reject_constant)
            except ValueError as exc:
                raise ParseError(path, lineno, f"malformed JSON: {exc}") from None
            try:
                t_idx, rx = int(obj["t_idx"]), int(obj["rx"])
                arrivals = obj["arrivals"]
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"bad record structure: {exc}") from None
            if last_t is not None and t_idx < last_t:
                raise ParseError(path, lineno, f"t_idx regression: {t_idx} after {last_t}")
            last_t = t_idx
            key = (t_idx, rx)
            if key in out:
                raise ParseError(path, lineno, f"duplicate record for (t_idx={t_idx}, rx={rx})")
            parsed = []
            for a in arrivals:
                try:
                    re, im, tau = float(a["re"]), float(a["im"]), float(a["tau_s"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(path, lineno, f"bad arrival entry: {exc}") from None
                if not (math.isfinite(re) and math.isfinite(im) and math.isfinite(tau)):
                    raise ParseError(path, lineno, "non-finite arrival value")
                parsed.append((complex(re, im), tau))
            out[key] = parsed
    if not out:
        raise ParseError(path, 0, "empty arrivals file")
    return out


# ------------------------------------------------------- folded tensor export

def export_folded_tensor(path_base: str, folded: np.ndarray):
    """Write folded slices as raw little-endian float64 plus a JSON sidecar."""
    arr = np.ascontiguousarray(folded, dtype="<f8")
    if arr.ndim != 3:
        raise DataError("folded tensor must have shape (K, N, N)")
    with open(path_base + ".bin", "wb") as fh:
        fh.write(arr.tobytes(order="C"))
    sidecar = {"n_rx": int(arr.shape[1]), "k": int(arr.shape[0]), "layout": "row-major"}
    with _open_w(path_base + ".json") as fh:
        fh.write(json.dumps(sidecar, sort_keys=True) + "\n")


def load_folded_tensor(path_base: str) -> np.ndarray:
    with open(path_base + ".json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("layout") != "row-major":
        raise DataError(f"unsupported layout {sidecar.get('layout')!r}")
    k, n = int(sidecar["k"]), int(sidecar["n_rx"])
    data = np.fromfile(path_base + ".bin", dtype="<f8")
    if data.size != k * n * n:
        raise DataError(f"tensor payload has {data.size} values, expected {k * n * n}")
    return data.reshape(k, n, n)


def hash_tree(root: str) -> dict[str, str]:
    """Relative path -> SHA-256 of every file under root (for determinism checks)."""
    import hashlib

    out = {}
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, root)
            with open(full, "rb") as fh:
                out[rel] = hashlib.sha256(fh.read()).hexdigest()
    return out
