"""Telemetry CSV, metrics JSON and plot-data files.

The telemetry file starts with a schema line so plot scripts can check the
column layout before parsing.  Floats are written with ``repr`` which keeps
them round-trippable and makes the CSV a stable basis for run hashes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .barriers import DescentParams, VcbfParams

SCHEMA = "cbfnav-telemetry/1"

_XYZ = ("x", "y", "z")
TELEMETRY_COLUMNS = (
    ["t", "phase", "px", "py", "pz", "vx", "vy", "vz", "hx_v", "h_d"]
    + [f"unom_{a}" for a in _XYZ]
    + [f"ufil_{a}" for a in _XYZ]
    + [f"e_{a}" for a in _XYZ]
    + ["kappa_hat", "m_hat"]
    + [f"taup_{a}" for a in _XYZ]
    + [f"tauq_{a}" for a in _XYZ]
)


class EmptyTelemetryError(ValueError):
    """Raised when asked to export a run without any records."""


def _f(x) -> str:
    return repr(float(x))


def _row(rec) -> list[str]:
    row = [_f(rec.t), rec.phase]
    for vec in (rec.p, rec.v):
        row += [_f(x) for x in vec]
    row += [_f(rec.h_v), _f(rec.h_d)]
    for vec in (rec.u_nom, rec.u_fil, rec.e):
        row += [_f(x) for x in vec]
    row += [_f(rec.kappa_hat), _f(rec.m_hat)]
    for vec in (rec.tau_p, rec.tau_q):
        row += [_f(x) for x in vec]
    return row


def _require(records: Sequence) -> None:
    if len(records) == 0:
        raise EmptyTelemetryError("telemetry stream is empty; nothing to export")


def telemetry_csv(records: Sequence) -> str:
    _require(records)
    buf = io.StringIO()
    buf.write(f"#schema={SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TELEMETRY_COLUMNS)
    for rec in records:
        w.writerow(_row(rec))
    return buf.getvalue()


def emit_csv(records: Sequence, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(telemetry_csv(records))
    return path


def to_jsonable(x):
    if isinstance(x, dict):
        return {k: to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def metrics_json(metrics) -> str:
    """RunMetrics as JSON; NaN (quantity not reached) becomes null."""
    return json.dumps(to_jsonable(metrics.to_dict()), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# boundary samplers


def vcbf_cone_samples(params: VcbfParams = VcbfParams(), depths=None, n_az: int = 36) -> np.ndarray:
    """Points on h_v = 0 expressed as base positions in the body frame.

    For a depth ``dz`` below the camera the boundary radius is
    ``dz * tan(theta_f / 2)``.
    """
    depths = np.linspace(0.05, 2.0, 40) if depths is None else np.asarray(depths, dtype=float)
    az = np.linspace(0.0, 2.0 * np.pi, n_az, endpoint=False)
    r = depths * np.tan(0.5 * params.theta_f)
    R, A = np.meshgrid(r, az, indexing="ij")
    Z = np.broadcast_to(depths[:, None], R.shape)
    pts = np.stack([R * np.cos(A), R * np.sin(A), Z], axis=-1).reshape(-1, 3)
    return pts + params.p_D_C


def dcbf_surface_samples(params: DescentParams, radius: float = 1.5, n: int = 41) -> np.ndarray:
    """Grid of points on h_d = 0 over a square of half-width ``radius`` in the target frame."""
    g = np.linspace(-radius, radius, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    Z = params.boundary_z(X**2 + Y**2)
    return np.stack([X, Y, Z], axis=-1).reshape(-1, 3)


def _write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else _f(x) for x in r])
    return path


def emit_plot_data(
    records: Sequence,
    out_dir: str | Path,
    vcbf: VcbfParams = VcbfParams(),
    descent: Mapping[str, DescentParams] | None = None,
) -> list[Path]:
    """Write the data series behind the trajectory, barrier and adaptation plots.

    * ``vcbf_cone.csv`` and ``dcbf_surface.csv``: boundary samples (x, y, z)
    * ``ascent_trajectory.csv``: base position seen from the camera while ascending
    * ``descent_trajectory.csv``: vehicle position in the target frame
    * ``barrier_values.csv``: estimated and true h per tick
    * ``adaptive.csv``: tracking error and adaptive gains
    """
    _require(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [_write_table(out / "vcbf_cone.csv", ("x", "y", "z"), vcbf_cone_samples(vcbf))]

    rows = []
    for phase, params in (descent or {}).items():
        rows += [(phase, *pt) for pt in dcbf_surface_samples(params)]
    written.append(_write_table(out / "dcbf_surface.csv", ("phase", "x", "y", "z"), rows))

    written.append(
        _write_table(
            out / "ascent_trajectory.csv",
            ("t", "x", "y", "z"),
            [(r.t, *r.p_C_W) for r in records if r.phase == "ascending" and np.all(np.isfinite(r.p_C_W))],
        )
    )
    written.append(
        _write_table(
            out / "descent_trajectory.csv",
            ("t", "phase", "x", "y", "z"),
            [(r.t, r.phase, *r.p_T_D) for r in records if np.all(np.isfinite(r.p_T_D))],
        )
    )
    written.append(
        _write_table(
            out / "barrier_values.csv",
            ("t", "phase", "h_v", "h_d", "h_true"),
            [(r.t, r.phase, r.h_v, r.h_d, r.h_true) for r in records],
        )
    )
    written.append(
        _write_table(
            out / "adaptive.csv",
            ("t", "phase", "e_x", "e_y", "e_z", "e_norm", "kappa_hat", "m_hat"),
            [(r.t, r.phase, *r.e, float(np.linalg.norm(r.e)), r.kappa_hat, r.m_hat) for r in records],
        )
    )
    return written


def descent_params_of(metrics) -> dict[str, DescentParams]:
    """Rebuild the descent surfaces recorded in a run's metrics."""
    out = {}
    for phase, d in metrics.descent_params.items():
        out[phase] = DescentParams(d["K1"], d["K2"], d["K3"], z_star=d["z_star"], l_star=d["l_star"])
    return out


def write_run(result, out_dir: str | Path) -> list[Path]:
    """Everything one run produces: telemetry, metrics, config and plot data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [emit_csv(result.records, out / "telemetry.csv")]
    (out / "metrics.json").write_text(metrics_json(result.metrics) + "\n")
    (out / "config.json").write_text(json.dumps(result.config.model_dump(mode="json"), indent=2) + "\n")
    files += [out / "metrics.json", out / "config.json"]
    vcbf = result.config.controller_config().vcbf
    files += emit_plot_data(result.records, out / "plots", vcbf, descent_params_of(result.metrics))
    return files

