"""Nonlinear time integration of the Couette-perturbation system.

State lives in the shear-following frame: the background advection is
absorbed into drifting wavenumbers (exact integrating factor), so the
explicit part of a step contains only the linear lift-up/pressure
coupling and the quadratic nonlinearity.  A phase-relabelling remesh
keeps the frame tilt bounded.

The stepper is an integrating-factor Heun scheme (second order).  Every
step ends with a Helmholtz-Leray cleanup at the new phase, keeping the
per-mode divergence at round-off.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import (
    DomainSpec,
    SpectralField,
    dealias,
    edge_energy_fraction,
    physical_values,
    from_values,
)
from .operators import (
    VelocityState,
    CoefficientFields,
    compute_coefficients,
    compute_W2,
    deriv,
    divergence_defect,
    good_derivative,
    gradient,
    inv_laplacian_nonzero,
    leray_project,
    multiply_fields,
    multiply_yz,
    project_nonzero,
    project_zero,
    pressure_decomposition,
    solve_poisson,
)
from .propagators import heat_multiplier
from .randfields import make_initial_condition
from .records import TrajectoryRecord
from . import norms

__all__ = [
    "ICSpec",
    "SimConfig",
    "BlowupSignal",
    "rhs_perturbation",
    "step",
    "simulate",
    "streak_simulate",
    "nonlinearity_decomposition",
    "write_checkpoint",
    "read_checkpoint",
    "checkpoint_info",
]

DT_CAP = 0.05
CHECKPOINT_MAGIC = b"CLAB"
CHECKPOINT_VERSION = 1


class BlowupSignal(RuntimeError):
    """Raised when the state leaves the resolvable regime (NaN/overflow)."""

    def __init__(self, time: float, reason: str):
        super().__init__(f"run left the stable regime at t={time}: {reason}")
        self.time = time
        self.reason = reason


@dataclass
class ICSpec:
    name: str = "zero"
    amplitude: float = 0.0
    seed: int = 0
    params: dict = field(default_factory=dict)


@dataclass
class SimConfig:
    domain: DomainSpec
    t_end: float
    t_start: float = 1.0
    dt: float | str = "auto"
    cfl: float = 0.4
    record_every: float | None = None
    remesh_enabled: bool = True
    linearized: bool = False
    blowup_factor: float = 1e3
    record_profile: str = "full"  # "light" records classification series only
    ic: ICSpec = field(default_factory=ICSpec)

    def __post_init__(self):
        if self.t_end <= 1.0:
            raise ValueError("t_end must exceed 1")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        if not 0.0 < self.cfl < 1.0:
            raise ValueError("cfl must lie in (0, 1)")
        if isinstance(self.dt, str) and self.dt != "auto":
            raise ValueError("dt must be a positive float or 'auto'")
        if self.record_profile not in ("full", "light"):
            raise ValueError("record_profile must be 'full' or 'light'")

    def cadence(self) -> float:
        if self.record_every is not None:
            return self.record_every
        # resolve the exp(a nu^(1/3) t) weights comfortably
        return min(0.1, self.domain.nu ** (-1.0 / 3.0) / 20.0)


# ---- right-hand side ----------------------------------------------------------


def _nonlinear_divform(u: VelocityState):
    """-d_j T(u_i u_j) as three coefficient arrays (divergence form)."""
    d = u.domain
    kx, ky, kz = d.wavenumbers(u.shear_phase)
    kvec = (kx, ky, kz)
    vals = [physical_values(c) for c in u.components()]
    out = [np.zeros(d.shape, dtype=complex) for _ in range(3)]
    for i in range(3):
        for j in range(i, 3):
            prod = dealias(from_values(vals[i] * vals[j], d, u.shear_phase)).coeffs
            out[i] += -1j * kvec[j] * prod
            if i != j:
                out[j] += -1j * kvec[i] * prod
    return out


def _tendency_arrays(u: VelocityState, linearized: bool):
    """Explicit tendency: projected forcing plus the frame-consistency
    gradient that keeps the drifting-frame divergence exact."""
    d = u.domain
    kx, ky, kz = d.wavenumbers(u.shear_phase)
    ksq = kx * kx + ky * ky + kz * kz
    inv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)

    f1 = -u.u2.coeffs.copy()  # lift-up forcing of the streamwise component
    f2 = np.zeros_like(f1)
    f3 = np.zeros_like(f1)
    if not linearized:
        n1, n2, n3 = _nonlinear_divform(u)
        f1 += n1
        f2 += n2
        f3 += n3
    # Leray projection
    kdotf = kx * f1 + ky * f2 + kz * f3
    proj = kdotf * inv
    f1 -= kx * proj
    f2 -= ky * proj
    f3 -= kz * proj
    # frame correction: gradient of InvLap(dx u2); its divergence offsets
    # the rotation of the effective wavenumbers so div u stays zero
    phi = -1j * kx * u.u2.coeffs * inv  # InvLap(dx u2)
    f1 += 1j * kx * phi
    f2 += 1j * ky * phi
    f3 += 1j * kz * phi
    return f1, f2, f3


def rhs_perturbation(u: VelocityState, d: DomainSpec | None = None) -> VelocityState:
    """Explicit forcing of the perturbation system, Leray-projected.

    Contains the lift-up term, both pressure gradients and the advective
    nonlinearity; diffusion and the background-shear advection are
    integrated exactly by the stepper and are not included here.
    """
    del d
    kx, ky, kz = u.domain.wavenumbers(u.shear_phase)
    ksq = kx * kx + ky * ky + kz * kz
    inv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    f1 = -u.u2.coeffs.copy()
    f2 = np.zeros_like(f1)
    f3 = np.zeros_like(f1)
    n1, n2, n3 = _nonlinear_divform(u)
    f1 += n1
    f2 += n2
    f3 += n3
    kdotf = kx * f1 + ky * f2 + kz * f3
    proj = kdotf * inv
    return replace(
        u,
        u1=u.u1.with_coeffs(f1 - kx * proj),
        u2=u.u2.with_coeffs(f2 - ky * proj),
        u3=u.u3.with_coeffs(f3 - kz * proj),
    )


# ---- stepping ------------------------------------------------------------------


def _cfl_dt(u: VelocityState, cfg: SimConfig) -> float:
    d = u.domain
    kmax = (
        2.0 * np.pi * (d.nx // 3),
        2.0 * np.pi * (d.ny // 3) / d.Ly,
        2.0 * np.pi * (d.nz // 3),
    )
    speed = 0.0
    for comp, km in zip(u.components(), kmax):
        umax = float(np.max(np.abs(physical_values(comp))))
        speed += umax * km
    # frame tilt couples u2 to the streamwise resolution
    speed += abs(u.shear_phase) * kmax[0] * float(
        np.max(np.abs(physical_values(u.u2)))
    )
    if speed == 0.0:
        return DT_CAP
    return min(DT_CAP, cfg.cfl / speed)


def _advance(u: VelocityState, h: float, cfg: SimConfig) -> VelocityState:
    """One integrating-factor Heun step of size h."""
    d = u.domain
    E = heat_multiplier(d, u.shear_phase, h, d.nu)
    g1 = _tendency_arrays(u, cfg.linearized)
    phase1 = u.shear_phase + h
    pred = replace(
        u,
        u1=SpectralField((u.u1.coeffs + h * g1[0]) * E, d, phase1),
        u2=SpectralField((u.u2.coeffs + h * g1[1]) * E, d, phase1),
        u3=SpectralField((u.u3.coeffs + h * g1[2]) * E, d, phase1),
        time=u.time + h,
    )
    g2 = _tendency_arrays(pred, cfg.linearized)
    out = replace(
        u,
        u1=SpectralField((u.u1.coeffs + 0.5 * h * g1[0]) * E + 0.5 * h * g2[0], d, phase1),
        u2=SpectralField((u.u2.coeffs + 0.5 * h * g1[1]) * E + 0.5 * h * g2[1], d, phase1),
        u3=SpectralField((u.u3.coeffs + 0.5 * h * g1[2]) * E + 0.5 * h * g2[2], d, phase1),
        time=u.time + h,
    )
    out = leray_project(out)  # remove O(h^3) frame-rotation residue
    if not np.isfinite(out.u1.coeffs).all() or not np.isfinite(
        out.u2.coeffs
    ).all() or not np.isfinite(out.u3.coeffs).all():
        raise BlowupSignal(out.time, "non-finite coefficients")
    return out


def _remesh_state(u: VelocityState):
    from .domain import remesh, needs_remesh

    if not needs_remesh(u.u1):
        return u, 0.0
    dropped = 0.0
    comps = []
    for c in u.components():
        nc, dr = remesh(c)
        comps.append(nc)
        dropped = max(dropped, dr)
    return replace(u, u1=comps[0], u2=comps[1], u3=comps[2]), dropped


def step(u: VelocityState, cfg: SimConfig, dt: float | None = None):
    """Advance one step; returns (state, info) with remesh monitoring."""
    if dt is None:
        dt = cfg.dt if isinstance(cfg.dt, float) else _cfl_dt(u, cfg)
    limit = _cfl_dt(u, cfg)
    if dt > 4.0 * limit:
        raise ValueError(
            f"dt={dt:.3e} violates the advective stability limit; "
            f"suggested dt <= {limit:.3e}"
        )
    out = _advance(u, dt, cfg)
    info = {"dt": dt, "dropped_energy": 0.0}
    if cfg.remesh_enabled:
        out, dropped = _remesh_state(out)
        info["dropped_energy"] = dropped
    return out, info


# ---- diagnostics ----------------------------------------------------------------


def _weighted_norm(coeffs_sq_sum: np.ndarray, w: np.ndarray, vol: float) -> float:
    return float(np.sqrt(vol * np.sum(w * coeffs_sq_sum)))


def snapshot_values(
    u: VelocityState, cfg: SimConfig, dropped_cum: float, profile: str | None = None
) -> dict:
    """Per-time series for the space-time functionals.

    The "light" profile keeps only what outcome classification needs
    (total/nonzero-mode amplitudes and the run-health monitors).
    """
    profile = profile or cfg.record_profile
    d = u.domain
    vol = d.volume
    kx, ky, kz = d.wavenumbers(u.shear_phase)
    ksq = kx * kx + ky * ky + kz * kz
    k, _, _ = d.modes()
    zero = k == 0
    neq = ~zero
    one_p = 1.0 + ksq

    c1, c2, c3 = (u.u1.coeffs, u.u2.coeffs, u.u3.coeffs)
    s1, s2, s3 = (np.abs(c1) ** 2, np.abs(c2) ** 2, np.abs(c3) ** 2)
    s_all = s1 + s2 + s3

    vals: dict[str, float] = {}

    def wn(sq, w):
        return _weighted_norm(sq, w, vol)

    # plain and Sobolev snapshots
    vals["u.l2"] = wn(s_all, np.ones_like(ksq))
    vals["grad_u.l2"] = wn(s_all, ksq)
    vals["u.h2"] = wn(s_all, one_p ** 2)
    vals["uneq.h2"] = wn(np.where(neq, s_all, 0.0), one_p ** 2)
    vals["u2neq.h2"] = wn(np.where(neq, s2, 0.0), one_p ** 2)
    vals["bar_u.h2"] = wn(np.where(zero, s_all, 0.0), one_p ** 2)
    if profile == "light":
        vals["lift_inner"] = float(vol * np.real(np.sum(c2 * np.conj(c1))))
        vals["div_defect"] = divergence_defect(u)
        vals["dropped_energy"] = dropped_cum
        vals["noise_floor"] = np.finfo(float).eps * vals["u.h2"]
        e_edge = 0.0
        if vals["u.l2"] > 0:
            fr = [
                edge_energy_fraction(comp) * norms.l2_norm(comp) ** 2
                for comp in u.components()
            ]
            e_edge = sum(fr) / vals["u.l2"] ** 2
        vals["edge_energy"] = e_edge
        return vals
    vals["bar_u.h4"] = wn(np.where(zero, s_all, 0.0), one_p ** 4)
    vals["grad_bar_u.h4"] = wn(np.where(zero, s_all, 0.0), ksq * one_p ** 4)
    vals["bar_u1.h4"] = wn(np.where(zero, s1, 0.0), one_p ** 4)
    vals["lift_inner"] = float(vol * np.real(np.sum(c2 * np.conj(c1))))

    # weighted-decay bases: (series weight, squared coefficient source)
    pxz2 = (kx * kx + kz * kz) ** 2
    bases = {
        "lap_u2neq": (np.where(neq, s2, 0.0), ksq * ksq),
        "pxz2_u3neq": (np.where(neq, s3, 0.0), pxz2),
        "lap_u3neq": (np.where(neq, s3, 0.0), ksq * ksq),
        "px2_u2": (s2, kx ** 4),
        "px2_u3": (s3, kx ** 4),
    }
    orr_w = np.where((k != 0) & (ksq > 0), kx ** 2 / np.where(ksq > 0, ksq, 1.0), 0.0)
    for name, (sq, mult) in bases.items():
        vals[f"{name}.l2"] = wn(sq, mult)
        vals[f"{name}.grad"] = wn(sq, ksq * mult)
        vals[f"{name}.orr"] = wn(sq, orr_w * mult)

    # Y0-tracked zero-mode bases
    ybases = {
        "lap_bar_u2": (np.where(zero, s2, 0.0), ksq * ksq),
        "bar_u3": (np.where(zero, s3, 0.0), np.ones_like(ksq)),
        "grad_bar_u3": (np.where(zero, s3, 0.0), ksq),
        "lap_bar_u3": (np.where(zero, s3, 0.0), ksq * ksq),
        "uneq": (np.where(neq, s_all, 0.0), np.ones_like(ksq)),
    }
    for name, (sq, mult) in ybases.items():
        vals[f"{name}.l2"] = wn(sq, mult)
        vals[f"{name}.grad"] = wn(sq, ksq * mult)

    # high-regularity weighted series
    pxz1 = kx * kx + kz * kz
    vals["pxz_uneq.h3"] = wn(np.where(neq, s_all, 0.0), pxz1 * one_p ** 3)
    vals["grad_pxz_uneq.h3"] = wn(np.where(neq, s_all, 0.0), ksq * pxz1 * one_p ** 3)

    # streak-adapted series; need the slope condition to hold
    ubar1 = project_zero(u.u1)
    dy_ubar1 = deriv(ubar1, 1)
    dy_max = float(np.max(np.abs(physical_values(dy_ubar1).real)))
    vals["dy_bar_u1_linf"] = dy_max
    if dy_max < 0.45:
        cf = compute_coefficients(ubar1, None, d, time=u.time, with_transform=False)
        w2f = compute_W2(u, cf)
        for j, comp in (("2", u.u2), ("3", u.u3)):
            gd = good_derivative(project_nonzero(comp), cf)
            sq = np.abs(gd.coeffs) ** 2
            name = f"px_gd_u{j}neq"
            vals[f"{name}.l2"] = wn(sq, kx ** 2)
            vals[f"{name}.grad"] = wn(sq, ksq * kx ** 2)
            vals[f"{name}.orr"] = wn(sq, orr_w * kx ** 2)
        sqw = np.abs(w2f.coeffs) ** 2
        vals["px_grad_w2.l2"] = wn(sqw, kx ** 2 * ksq)
        vals["px_grad_w2.grad"] = wn(sqw, kx ** 2 * ksq * ksq)
        vals["px_grad_w2.orr"] = wn(sqw, orr_w * kx ** 2 * ksq)
    else:
        for name in ("px_gd_u2neq", "px_gd_u3neq", "px_grad_w2"):
            vals[f"{name}.l2"] = 0.0
            vals[f"{name}.grad"] = 0.0
            vals[f"{name}.orr"] = 0.0

    # time derivative of the streak from the instantaneous right-hand side
    f1, f2, f3 = _tendency_arrays(u, cfg.linearized)
    visc = -d.nu * ksq
    tend_sq = (
        np.abs(np.where(zero, f1 + visc * c1, 0.0)) ** 2
        + np.abs(np.where(zero, f2 + visc * c2, 0.0)) ** 2
        + np.abs(np.where(zero, f3 + visc * c3, 0.0)) ** 2
    )
    vals["dt_bar_u.h2"] = wn(tend_sq, one_p ** 2)

    vals["div_defect"] = divergence_defect(u)
    e_edge = 0.0
    tot = vals["u.l2"]
    if tot > 0:
        fr = [
            edge_energy_fraction(comp) * norms.l2_norm(comp) ** 2
            for comp in u.components()
        ]
        e_edge = sum(fr) / tot ** 2
    vals["edge_energy"] = e_edge
    vals["dropped_energy"] = dropped_cum
    vals["noise_floor"] = np.finfo(float).eps * vals["u.h2"]
    return vals


# ---- simulation drivers -----------------------------------------------------------


def _initial_state(cfg: SimConfig) -> VelocityState:
    return make_initial_condition(
        cfg.domain,
        cfg.ic.name,
        cfg.ic.amplitude,
        cfg.ic.seed,
        time=cfg.t_start,
        **cfg.ic.params,
    )


def simulate(
    cfg: SimConfig,
    *,
    checkpoint_path: str | None = None,
    resume_from: str | None = None,
    initial_state: VelocityState | None = None,
) -> TrajectoryRecord:
    """Integrate from t_start to t_end, recording snapshot diagnostics.

    Blow-up is a classified outcome: the record is returned with
    `flags["transitioned"]` set rather than raising.
    """
    if initial_state is not None:
        u = initial_state
    elif resume_from is not None:
        u, meta = read_checkpoint(resume_from, cfg.domain)
    else:
        u = _initial_state(cfg)

    rec = TrajectoryRecord(
        meta={
            "nu": cfg.domain.nu,
            "Ly": cfg.domain.Ly,
            "shape": list(cfg.domain.shape),
            "t_start": cfg.t_start,
            "t_end": cfg.t_end,
            "ic": {
                "name": cfg.ic.name,
                "amplitude": cfg.ic.amplitude,
                "seed": cfg.ic.seed,
            },
            "linearized": cfg.linearized,
        }
    )
    cad = cfg.cadence()
    h2_init = norms.vector_norm([norms.sobolev_norm(c, 2.0) for c in u.components()])
    rec.meta["h2_initial"] = h2_init
    dropped_cum = 0.0

    # snapshot schedule anchored at t_start so resumed runs stay aligned
    i_snap = int(np.floor((u.time - cfg.t_start) / cad + 1e-9))
    if abs(cfg.t_start + i_snap * cad - u.time) < 1e-9 * max(1.0, cad):
        rec.append(u.time, snapshot_values(u, cfg, dropped_cum))
        i_snap += 1

    transitioned_at = None
    while u.time < cfg.t_end - 1e-9:
        t_next = min(cfg.t_start + i_snap * cad, cfg.t_end)
        try:
            while u.time < t_next - 1e-9:
                dt_now = (
                    cfg.dt if isinstance(cfg.dt, float) else _cfl_dt(u, cfg)
                )
                h = min(dt_now, t_next - u.time)
                u, info = step(u, cfg, h)
                dropped_cum += info["dropped_energy"]
        except BlowupSignal as sig:
            transitioned_at = sig.time
            break
        vals = snapshot_values(u, cfg, dropped_cum)
        rec.append(u.time, vals)
        if (
            cfg.blowup_factor > 0
            and h2_init > 0
            and vals["u.h2"] > cfg.blowup_factor * h2_init
        ):
            transitioned_at = u.time
            break
        i_snap += 1

    if transitioned_at is not None:
        rec.flags["transitioned"] = True
        rec.flags["transition_time"] = transitioned_at
    if checkpoint_path is not None:
        write_checkpoint(checkpoint_path, u)
        rec.meta["checkpoint"] = checkpoint_path
    rec.flags.setdefault("transitioned", False)
    rec.final_state = u
    return rec


# ---- x-independent fast path -------------------------------------------------


def _streak_only(u: VelocityState) -> bool:
    k, _, _ = u.domain.modes()
    nz = k.ravel() != 0
    return all(
        float(np.max(np.abs(c.coeffs[nz]))) <= 1e-14 * (1.0 + float(np.max(np.abs(c.coeffs))))
        for c in u.components()
    )


def streak_simulate(cfg: SimConfig, *, initial_state: VelocityState | None = None) -> TrajectoryRecord:
    """Evolve x-independent data: 2D cross-plane flow advecting the streak.

    (u2, u3) obey the 2D incompressible dynamics in (y, z); u1 is an
    advected scalar forced by -u2.  Equivalent to `simulate` on k=0 data
    but restricted to the plane.
    """
    u = initial_state if initial_state is not None else _initial_state(cfg)
    if not _streak_only(u):
        raise ValueError("streak_simulate requires x-independent initial data")
    d = cfg.domain

    # 2D spectral state on the (m, l) plane
    def plane(c):
        return c.coeffs[0].copy()

    w1, w2, w3 = (plane(u.u1), plane(u.u2), plane(u.u3))
    m = np.fft.fftfreq(d.ny, 1.0 / d.ny).reshape(-1, 1)
    l = np.fft.fftfreq(d.nz, 1.0 / d.nz).reshape(1, -1)
    KY = 2.0 * np.pi * m / d.Ly
    KZ = 2.0 * np.pi * l
    K2 = KY ** 2 + KZ ** 2
    inv = np.where(K2 > 0, 1.0 / np.where(K2 > 0, K2, 1.0), 0.0)
    band = (np.abs(m) <= d.ny // 3) & (np.abs(l) <= d.nz // 3)
    npts = d.ny * d.nz

    def to_phys(c):
        return np.fft.ifft2(c * npts)

    def to_spec(v):
        return np.where(band, np.fft.fft2(v) / npts, 0.0)

    def phys_deriv(a, K):
        return np.fft.ifft2(1j * K * a * npts)

    def tendency(a1, a2, a3):
        v2, v3 = to_phys(a2), to_phys(a3)
        # divergence form for the plane flow
        t22 = to_spec(v2 * v2)
        t23 = to_spec(v2 * v3)
        t33 = to_spec(v3 * v3)
        g2 = -1j * (KY * t22 + KZ * t23)
        g3 = -1j * (KY * t23 + KZ * t33)
        kdot = (KY * g2 + KZ * g3) * inv
        g2 -= KY * kdot
        g3 -= KZ * kdot
        adv1 = to_spec(v2 * phys_deriv(a1, KY) + v3 * phys_deriv(a1, KZ))
        g1 = -adv1 - a2
        return g1, g2, g3

    cad = cfg.cadence()
    rec = TrajectoryRecord(
        meta={
            "nu": d.nu,
            "Ly": d.Ly,
            "shape": list(d.shape),
            "t_start": cfg.t_start,
            "t_end": cfg.t_end,
            "streak_only": True,
        }
    )

    def wrap():
        full = np.zeros(d.shape, dtype=complex)
        state = []
        for w in (w1, w2, w3):
            c = full.copy()
            c[0] = w
            state.append(SpectralField(c, d, 0.0))
        return VelocityState(u1=state[0], u2=state[1], u3=state[2], time=t)

    t = u.time
    rec.meta["h2_initial"] = norms.vector_norm(
        [norms.sobolev_norm(c, 2.0) for c in wrap().components()]
    )
    rec.append(t, snapshot_values(wrap(), cfg, 0.0))
    i_snap = 1
    while t < cfg.t_end - 1e-9:
        t_next = min(cfg.t_start + i_snap * cad, cfg.t_end)
        while t < t_next - 1e-9:
            if isinstance(cfg.dt, float):
                dt_now = cfg.dt
            else:
                speed = (
                    float(np.max(np.abs(to_phys(w2)))) * 2 * np.pi * (d.ny // 3) / d.Ly
                    + float(np.max(np.abs(to_phys(w3)))) * 2 * np.pi * (d.nz // 3)
                )
                dt_now = DT_CAP if speed == 0 else min(DT_CAP, cfg.cfl / speed)
            h = min(dt_now, t_next - t)
            E = np.exp(-d.nu * K2 * h)
            g1 = tendency(w1, w2, w3)
            p1, p2, p3 = (
                (w1 + h * g1[0]) * E,
                (w2 + h * g1[1]) * E,
                (w3 + h * g1[2]) * E,
            )
            g2 = tendency(p1, p2, p3)
            w1 = (w1 + 0.5 * h * g1[0]) * E + 0.5 * h * g2[0]
            w2 = (w2 + 0.5 * h * g1[1]) * E + 0.5 * h * g2[1]
            w3 = (w3 + 0.5 * h * g1[2]) * E + 0.5 * h * g2[2]
            kdot = (KY * w2 + KZ * w3) * inv
            w2 -= KY * kdot
            w3 -= KZ * kdot
            t += h
            if not (np.isfinite(w1).all() and np.isfinite(w2).all() and np.isfinite(w3).all()):
                rec.flags["transitioned"] = True
                rec.flags["transition_time"] = t
                return rec
        rec.append(t, snapshot_values(wrap(), cfg, 0.0))
        i_snap += 1
    rec.flags.setdefault("transitioned", False)
    rec.final_state = wrap()
    return rec


# ---- nonlinearity decomposition ----------------------------------------------


def nonlinearity_decomposition(u: VelocityState, c: CoefficientFields) -> dict:
    """Split the forcing of the cross-stream components by interaction class.

    Returns g_{j,k} for j in {2,3}, k in 1..6, their direct sums, and the
    shear-aligned combinations G2_k = P_neq(g_{2,k} + kappa g_{3,k}).
    """
    d = u.domain
    ubar = [project_zero(comp) for comp in u.components()]
    uneq = [project_nonzero(comp) for comp in u.components()]
    p1, p2, p3, p4 = pressure_decomposition(u)

    out: dict[str, SpectralField] = {}
    pressures = {4: p2, 5: p3, 6: p4}
    for j, comp, comp_neq in ((2, u.u2, uneq[1]), (3, u.u3, uneq[2])):
        adv_bar = multiply_fields(ubar[1], deriv(comp, 1)) + multiply_fields(
            ubar[2], deriv(comp, 2)
        )
        out[f"g_{j}_1"] = adv_bar
        grads = gradient(project_zero(comp))
        out[f"g_{j}_2"] = (
            multiply_fields(uneq[0], grads[0])
            + multiply_fields(uneq[1], grads[1])
            + multiply_fields(uneq[2], grads[2])
        )
        gneq = gradient(project_nonzero(comp))
        out[f"g_{j}_3"] = (
            multiply_fields(uneq[0], gneq[0])
            + multiply_fields(uneq[1], gneq[1])
            + multiply_fields(uneq[2], gneq[2])
        )
        for kk, p in pressures.items():
            out[f"g_{j}_{kk}"] = deriv(p, j - 1)
        # direct evaluation for the sum check
        gfull = gradient(comp)
        direct = (
            multiply_fields(ubar[1], gfull[1])
            + multiply_fields(ubar[2], gfull[2])
            + multiply_fields(uneq[0], gfull[0])
            + multiply_fields(uneq[1], gfull[1])
            + multiply_fields(uneq[2], gfull[2])
            + deriv(p2 + p3 + p4, j - 1)
        )
        out[f"g_{j}_direct"] = direct

    for kk in range(1, 7):
        out[f"G2_{kk}"] = project_nonzero(
            out[f"g_2_{kk}"] + multiply_yz(out[f"g_3_{kk}"], c.kappa)
        )
    out["G2"] = project_nonzero(
        out["g_2_direct"] + multiply_yz(out["g_3_direct"], c.kappa)
    )
    return out


# ---- checkpointing -------------------------------------------------------------


def write_checkpoint(path: str, u: VelocityState) -> None:
    """Fixed-layout binary snapshot of the spectral state.

    Header: magic, version, nx, ny, nz (u32), Ly, nu, t, shear_phase (f64);
    then u1, u2, u3 coefficients as little-endian complex128 in
    (k, m, l) row-major order with indices running -n/2 .. n/2-1.
    """
    d = u.domain
    header = CHECKPOINT_MAGIC + struct.pack(
        "<IIIIdddd",
        CHECKPOINT_VERSION,
        d.nx,
        d.ny,
        d.nz,
        d.Ly,
        d.nu,
        u.time,
        u.shear_phase,
    )
    with open(path, "wb") as f:
        f.write(header)
        for comp in u.components():
            shifted = np.fft.fftshift(comp.coeffs)
            f.write(np.ascontiguousarray(shifted).astype("<c16").tobytes())


def checkpoint_info(path: str) -> dict:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version, nx, ny, nz = struct.unpack("<IIII", f.read(16))
        Ly, nu, t, phase = struct.unpack("<dddd", f.read(32))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    return {
        "version": version,
        "nx": nx,
        "ny": ny,
        "nz": nz,
        "Ly": Ly,
        "nu": nu,
        "time": t,
        "shear_phase": phase,
    }


def read_checkpoint(path: str, d: DomainSpec | None = None):
    info = checkpoint_info(path)
    dom = d or DomainSpec(info["nx"], info["ny"], info["nz"], info["Ly"], info["nu"])
    if (dom.nx, dom.ny, dom.nz) != (info["nx"], info["ny"], info["nz"]):
        raise ValueError("checkpoint grid does not match the requested domain")
    count = dom.n_total
    comps = []
    with open(path, "rb") as f:
        f.read(4 + 16 + 32)
        for _ in range(3):
            raw = np.frombuffer(f.read(16 * count), dtype="<c16").reshape(dom.shape)
            comps.append(
                SpectralField(
                    np.fft.ifftshift(raw).astype(complex), dom, info["shear_phase"]
                )
            )
    u = VelocityState(u1=comps[0], u2=comps[1], u3=comps[2], time=info["time"])
    return u, info
