"""Sobolev norms of snapshots and space-time functionals of records.

All spectral norms are taken with stationary-frame wavenumbers, i.e.
with each mode's effective wavenumber at the field's shear phase; the
L2 norm itself is frame independent.

Space-time norms combine a sup-in-time part with trapezoid-rule time
integrals over the snapshot grid:

    Y0(f)^2   = sup ||f||^2 + nu * int ||grad f||^2
    Xa(f)^2   = sup ||w f||^2 + int ||w grad InvLap dx f||^2
                + nu^(1/3) int ||w f||^2 + nu * int ||w grad f||^2,
    w = exp(a nu^(1/3) t).

Exponentially weighted functionals of decayed signals are dominated by
round-off noise once the signal passes the floating-point floor, so the
record-based evaluations gate each series at a relative dynamic range
(`gate_rel`, default 1e-12): snapshots smaller than gate_rel * max are
treated as identically zero.  Pass gate_rel=0 to disable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DomainSpec, SpectralField
from .records import TrajectoryRecord, dump_json

__all__ = [
    "NormRequest",
    "EnergyReport",
    "sobolev_norm",
    "l2_norm",
    "grad_norm",
    "orr_norm",
    "Xa_norm",
    "Y0_norm",
    "Y0k_norm",
    "energy_functionals",
]

GATE_REL_DEFAULT = 1e-12


# ---- instantaneous spectral norms -------------------------------------------


def _projection_mask(d: DomainSpec, projection: str) -> np.ndarray | None:
    if projection == "all":
        return None
    k, _, _ = d.modes()
    if projection == "zero":
        return k == 0
    if projection == "nonzero":
        return k != 0
    raise ValueError(f"unknown projection {projection!r}")


def _masked_sq(f: SpectralField, projection: str) -> np.ndarray:
    sq = np.abs(f.coeffs) ** 2
    mask = _projection_mask(f.domain, projection)
    return sq if mask is None else np.where(mask, sq, 0.0)


def sobolev_norm(f: SpectralField, s: float, projection: str = "all") -> float:
    """H^s norm, weight (1 + |K_eff|^2)^s, Parseval factor Ly included."""
    if not 0.0 <= s <= 5.0:
        raise ValueError("H^s norms are supported for s in [0, 5]")
    ksq = f.domain.ksq(f.shear_phase)
    w = (1.0 + ksq) ** s
    return float(np.sqrt(f.domain.volume * np.sum(w * _masked_sq(f, projection))))


def l2_norm(f: SpectralField, projection: str = "all") -> float:
    return float(np.sqrt(f.domain.volume * np.sum(_masked_sq(f, projection))))


def grad_norm(f: SpectralField, projection: str = "all") -> float:
    ksq = f.domain.ksq(f.shear_phase)
    return float(
        np.sqrt(f.domain.volume * np.sum(ksq * _masked_sq(f, projection)))
    )


def orr_norm(f: SpectralField) -> float:
    """||grad InvLap dx f||: multiplier |kx|/|K| on k != 0 modes (<= 1)."""
    d = f.domain
    kx, ky, kz = d.wavenumbers(f.shear_phase)
    ksq = kx * kx + ky * ky + kz * kz
    k, _, _ = d.modes()
    mult = np.where((k != 0) & (ksq > 0), kx ** 2 / np.where(ksq > 0, ksq, 1.0), 0.0)
    return float(np.sqrt(d.volume * np.sum(mult * np.abs(f.coeffs) ** 2)))


def vector_norm(norms: list[float]) -> float:
    return float(np.sqrt(sum(v * v for v in norms)))


# ---- record-based space-time norms -------------------------------------------


@dataclass(frozen=True)
class NormRequest:
    """Names one recorded field series plus a mode projection."""

    kind: str
    projection: str = "all"

    def series_base(self) -> str:
        if self.projection == "all":
            return self.kind
        if self.projection == "nonzero":
            return self.kind + "neq"
        if self.projection == "zero":
            return "bar_" + self.kind
        raise ValueError(f"unknown projection {self.projection!r}")


def _resolve_base(which) -> str:
    return which.series_base() if isinstance(which, NormRequest) else str(which)


def _gate(values: np.ndarray, gate_rel: float) -> np.ndarray:
    """Zero out entries below gate_rel * max: sub-round-off dynamic range."""
    if gate_rel <= 0.0 or values.size == 0:
        return values
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return values
    return np.where(np.abs(values) >= gate_rel * peak, values, 0.0)


def _trapz(y: np.ndarray, t: np.ndarray) -> float:
    if len(t) < 2:
        return 0.0
    return float(np.trapz(y, t))


def Xa_norm(
    rec: TrajectoryRecord,
    which_field,
    a: float,
    nu: float,
    *,
    gate_rel: float = GATE_REL_DEFAULT,
):
    """Exponentially weighted space-time norm of one recorded field.

    Needs the `.l2`, `.orr` and `.grad` series of the base name.
    Returns (value, components) with the four squared terms.
    """
    base = _resolve_base(which_field)
    t = rec.t
    w = np.exp(a * nu ** (1.0 / 3.0) * t)
    f = _gate(rec.get(f"{base}.l2"), gate_rel) * w
    orr = _gate(rec.get(f"{base}.orr"), gate_rel) * w
    g = _gate(rec.get(f"{base}.grad"), gate_rel) * w
    comps = {
        "sup_sq": float(np.max(f ** 2)) if len(t) else 0.0,
        "orr_sq": _trapz(orr ** 2, t),
        "l2_sq": nu ** (1.0 / 3.0) * _trapz(f ** 2, t),
        "grad_sq": nu * _trapz(g ** 2, t),
    }
    return float(np.sqrt(sum(comps.values()))), comps


def Y0_norm(
    rec: TrajectoryRecord,
    which_field,
    nu: float,
    *,
    weight=None,
    gate_rel: float = GATE_REL_DEFAULT,
):
    """Unweighted sup-plus-dissipation norm; optional scalar weight w(t)."""
    base = _resolve_base(which_field)
    t = rec.t
    wt = np.ones_like(t) if weight is None else np.asarray(weight(t), dtype=float)
    f = _gate(rec.get(f"{base}.l2"), gate_rel) * wt
    g = _gate(rec.get(f"{base}.grad"), gate_rel) * wt
    comps = {
        "sup_sq": float(np.max(f ** 2)) if len(t) else 0.0,
        "grad_sq": nu * _trapz(g ** 2, t),
    }
    return float(np.sqrt(sum(comps.values()))), comps


def Y0k_norm(
    rec: TrajectoryRecord,
    which_field,
    nu: float,
    k: int = 2,
    *,
    gate_rel: float = GATE_REL_DEFAULT,
):
    """H^k-based variant: sup ||f||_{H^k}^2 + nu int ||grad f||_{H^k}^2."""
    base = _resolve_base(which_field)
    t = rec.t
    f = _gate(rec.get(f"{base}.h{k}"), gate_rel)
    g = _gate(rec.get(f"grad_{base}.h{k}"), gate_rel)
    comps = {
        "sup_sq": float(np.max(f ** 2)) if len(t) else 0.0,
        "grad_sq": nu * _trapz(g ** 2, t),
    }
    return float(np.sqrt(sum(comps.values()))), comps


# ---- energy functionals -------------------------------------------------------


@dataclass
class EnergyReport:
    """The six run-level energy functionals plus their term breakdowns."""

    e1: float
    e2: float
    e3: float
    e4: float
    e5: float
    e6: float
    components: dict = field(default_factory=dict)
    eps0: float = 0.05
    nu: float = 0.0
    bootstrap_ok: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "E1": self.e1,
            "E2": self.e2,
            "E3": self.e3,
            "E4": self.e4,
            "E5": self.e5,
            "E6": self.e6,
            "eps0": self.eps0,
            "nu": self.nu,
            "bootstrap_ok": dict(self.bootstrap_ok),
            "components": self.components,
        }

    def to_json(self, path_or_buf=None):
        return dump_json(self.as_dict(), path_or_buf)


def energy_functionals(
    rec: TrajectoryRecord,
    nu: float,
    *,
    eps0: float = 0.05,
    gate_rel: float = GATE_REL_DEFAULT,
) -> EnergyReport:
    """Assemble the zero-mode and nonzero-mode energy functionals.

    E1, E2 track the x-averaged flow (streak); E3..E6 track the
    nonzero-x modes under the exp(a nu^(1/3) t) decay weights.
    """
    t = rec.t
    if len(t) < 2:
        raise ValueError("record too short: need at least two snapshots")
    nu13 = nu ** (1.0 / 3.0)
    comps: dict = {}

    # E1: streak amplitude, dissipation, and time-derivative share
    bar_h4 = rec.get("bar_u.h4")
    grad_h4 = rec.get("grad_bar_u.h4")
    dt_h2 = rec.get("dt_bar_u.h2")
    bar_h2_init = float(rec.get("bar_u.h2")[0])
    e1_terms = {
        "sup_h4": float(np.max(bar_h4)),
        "dissip": float(np.sqrt(nu * _trapz(grad_h4 ** 2, t))),
        "dt_over_nu": (float(np.max(dt_h2)) + bar_h2_init) / nu,
    }
    e1 = sum(e1_terms.values())
    comps["E1"] = e1_terms

    # E2: cross-stream streak components in dissipation norms
    wmin = lambda tt: np.minimum(nu ** (2.0 / 3.0) + nu * tt, 1.0) ** 0.5
    y_terms = {}
    y_terms["lap_bar_u2"], _ = Y0_norm(rec, "lap_bar_u2", nu, gate_rel=gate_rel)
    y_terms["bar_u3"], _ = Y0_norm(rec, "bar_u3", nu, gate_rel=gate_rel)
    y_terms["grad_bar_u3"], _ = Y0_norm(rec, "grad_bar_u3", nu, gate_rel=gate_rel)
    y_terms["weighted_lap_bar_u3"], _ = Y0_norm(
        rec, "lap_bar_u3", nu, weight=wmin, gate_rel=gate_rel
    )
    e2 = sum(y_terms.values())
    comps["E2"] = y_terms

    # E3: second-order decay norms of the cross-stream nonzero modes
    x_lap_u2, c1 = Xa_norm(rec, "lap_u2neq", 2.0, nu, gate_rel=gate_rel)
    x_pxz2_u3, c2 = Xa_norm(rec, "pxz2_u3neq", 2.0, nu, gate_rel=gate_rel)
    x_lap_u3, c3 = Xa_norm(rec, "lap_u3neq", 3.0, nu, gate_rel=gate_rel)
    e3_terms = {
        "lap_u2neq_X2": x_lap_u2,
        "pxz2_u3neq_X2": x_pxz2_u3,
        "nu23_lap_u3neq_X3": nu ** (2.0 / 3.0) * x_lap_u3,
    }
    e3 = sum(e3_terms.values())
    comps["E3"] = {**e3_terms, "X2_lap_u2neq": c1, "X2_pxz2_u3neq": c2, "X3_lap_u3neq": c3}

    # E4: high-regularity weighted norms of (dx, dz) of the nonzero modes
    w2 = np.exp(2.0 * nu13 * t)
    pxz = _gate(rec.get("pxz_uneq.h3"), gate_rel) * w2
    gpxz = _gate(rec.get("grad_pxz_uneq.h3"), gate_rel) * w2
    e4_terms = {
        "sup": float(np.max(pxz)),
        "dissip": float(np.sqrt(nu * _trapz(gpxz ** 2, t))),
    }
    e4 = sum(e4_terms.values())
    comps["E4"] = e4_terms

    # E5: streamwise-curvature norms
    x_px2_u2, _ = Xa_norm(rec, "px2_u2", 3.0, nu, gate_rel=gate_rel)
    x_px2_u3, _ = Xa_norm(rec, "px2_u3", 3.0, nu, gate_rel=gate_rel)
    e5 = x_px2_u2 + x_px2_u3
    comps["E5"] = {"px2_u2_X3": x_px2_u2, "px2_u3_X3": x_px2_u3}

    # E6: quadratic combination adapted to the streak-aligned derivative
    x_gd2, _ = Xa_norm(rec, "px_gd_u2neq", 3.0, nu, gate_rel=gate_rel)
    x_gd3, _ = Xa_norm(rec, "px_gd_u3neq", 3.0, nu, gate_rel=gate_rel)
    x_w2, _ = Xa_norm(rec, "px_grad_w2", 3.0, nu, gate_rel=gate_rel)
    e6_terms = {
        "px2_u2_X3_sq": x_px2_u2 ** 2,
        "px2_u3_X3_sq": x_px2_u3 ** 2,
        "px_gd_u2neq_X3_sq": x_gd2 ** 2,
        "px_gd_u3neq_X3_sq": x_gd3 ** 2,
        "px_grad_w2_X3_sq": x_w2 ** 2,
    }
    e6 = sum(e6_terms.values())
    comps["E6"] = e6_terms

    report = EnergyReport(
        e1=e1, e2=e2, e3=e3, e4=e4, e5=e5, e6=e6,
        components=comps, eps0=eps0, nu=nu,
    )
    report.bootstrap_ok = {
        "E1<=eps0": bool(e1 <= eps0),
        "E2<=eps0*nu": bool(e2 <= eps0 * nu),
        "E3<=eps0*nu": bool(e3 <= eps0 * nu),
    }
    return report
