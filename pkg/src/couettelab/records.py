"""Time-series records of simulation diagnostics, with CSV/JSON output.

A `TrajectoryRecord` stores, per snapshot time, every instantaneous norm
needed to assemble the space-time functionals afterwards.  Column names
follow a small grammar:

    <base>.l2    L2 norm of the named field
    <base>.grad  L2 norm of its gradient
    <base>.orr   L2 norm of grad(InvLap(dx(field)))  (streamwise-recovery term)
    <base>.h<k>  H^k norm

Bases used by the standard runs are listed in `SERIES_MANIFEST`.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1

_XA_BASES = {
    "lap_u2neq": "Laplacian of the nonzero-x part of u2",
    "pxz2_u3neq": "(dx^2+dz^2) of the nonzero-x part of u3",
    "lap_u3neq": "Laplacian of the nonzero-x part of u3",
    "px2_u2": "dx^2 u2",
    "px2_u3": "dx^2 u3",
    "px_gd_u2neq": "dx (dz - kappa dy) of nonzero-x u2",
    "px_gd_u3neq": "dx (dz - kappa dy) of nonzero-x u3",
    "px_grad_w2": "dx grad of W2 = u2_neq + kappa u3_neq (vector)",
}

_Y0_BASES = {
    "lap_bar_u2": "Laplacian of x-averaged u2",
    "bar_u3": "x-averaged u3",
    "grad_bar_u3": "gradient of x-averaged u3 (vector)",
    "lap_bar_u3": "Laplacian of x-averaged u3",
    "uneq": "nonzero-x part of the velocity (vector)",
}

_SCALAR_SERIES = {
    "bar_u.h2": "H^2 norm of the x-averaged velocity",
    "bar_u.h4": "H^4 norm of the x-averaged velocity",
    "grad_bar_u.h4": "H^4 norm of grad of the x-averaged velocity",
    "dt_bar_u.h2": "H^2 norm of the time derivative of the x-averaged velocity",
    "bar_u1.h4": "H^4 norm of the x-averaged streamwise velocity",
    "dy_bar_u1_linf": "max |dy ubar1| (slope-condition monitor)",
    "pxz_uneq.h3": "H^3 norm of (dx, dz) applied to nonzero-x velocity",
    "grad_pxz_uneq.h3": "H^3 norm of grad (dx, dz) nonzero-x velocity",
    "u.h2": "H^2 norm of the full perturbation velocity",
    "uneq.h2": "H^2 norm of the nonzero-x velocity",
    "u2neq.h2": "H^2 norm of the nonzero-x part of u2",
    "u.l2": "L2 norm of the velocity",
    "grad_u.l2": "L2 norm of the velocity gradient",
    "lift_inner": "L2 inner product <u2, u1> (lift-up energy exchange)",
    "div_defect": "max per-mode relative divergence",
    "edge_energy": "energy fraction in the outer 10% of the y range",
    "dropped_energy": "cumulative energy fraction discarded by remeshing",
    "noise_floor": "machine-epsilon scale of the state (gating reference)",
}


def series_manifest() -> dict[str, str]:
    man = {"time": "snapshot time"}
    for base, desc in _XA_BASES.items():
        man[f"{base}.l2"] = f"L2 norm of {desc}"
        man[f"{base}.grad"] = f"L2 norm of the gradient of {desc}"
        man[f"{base}.orr"] = f"L2 norm of grad InvLap dx of {desc}"
    for base, desc in _Y0_BASES.items():
        man[f"{base}.l2"] = f"L2 norm of {desc}"
        man[f"{base}.grad"] = f"L2 norm of the gradient of {desc}"
    man.update(_SCALAR_SERIES)
    return man


SERIES_MANIFEST = series_manifest()


@dataclass
class TrajectoryRecord:
    """Append-only snapshot store produced by one simulation."""

    times: list[float] = field(default_factory=list)
    series: dict[str, list[float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    # runtime-only handle to the last simulated state (never serialised)
    final_state: object = field(default=None, repr=False, compare=False)

    def append(self, t: float, values: dict[str, float]):
        if self.times and t <= self.times[-1]:
            raise ValueError("snapshot times must be strictly increasing")
        for v in values.values():
            if not np.isfinite(v):
                raise ValueError(f"non-finite diagnostic at t={t}")
        self.times.append(float(t))
        for name, v in values.items():
            self.series.setdefault(name, []).append(float(v))
        lengths = {len(v) for v in self.series.values()}
        if lengths != {len(self.times)}:
            raise ValueError("snapshot wrote an inconsistent set of series")

    def get(self, name: str) -> np.ndarray:
        if name not in self.series:
            raise KeyError(
                f"record has no series {name!r}; available: "
                + ", ".join(sorted(self.series))
            )
        return np.asarray(self.series[name])

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    # ---- serialisation ----------------------------------------------------

    def to_csv(self, path_or_buf) -> None:
        names = sorted(self.series)
        own = isinstance(path_or_buf, (str, bytes))
        f = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(f)
            w.writerow(["time", *names])
            for i, t in enumerate(self.times):
                w.writerow(
                    [format(t, ".17g")]
                    + [format(self.series[n][i], ".17g") for n in names]
                )
        finally:
            if own:
                f.close()

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def write_manifest(self, path) -> None:
        man = {
            "schema_version": SCHEMA_VERSION,
            "meta": _jsonable(self.meta),
            "flags": _jsonable(self.flags),
            "columns": {
                n: SERIES_MANIFEST.get(n, "auxiliary series")
                for n in ["time", *sorted(self.series)]
            },
        }
        with open(path, "w") as f:
            json.dump(man, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_csv(cls, path, meta: dict | None = None) -> "TrajectoryRecord":
        rec = cls(meta=meta or {})
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            names = header[1:]
            for row in r:
                rec.append(
                    float(row[0]),
                    {n: float(v) for n, v in zip(names, row[1:])},
                )
        return rec


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def dump_json(obj, path_or_buf=None):
    """Canonical JSON used by every report (sorted keys, schema tag)."""
    payload = dict(_jsonable(obj))
    payload.setdefault("schema_version", SCHEMA_VERSION)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path_or_buf is None:
        return text
    if isinstance(path_or_buf, (str, bytes)):
        with open(path_or_buf, "w") as f:
            f.write(text)
    else:
        path_or_buf.write(text)
    return text
