"""Closed-form and semi-analytic evolution of the linearised operators.

The scalar building block is the mode ODE

    f' + nu * gamma(t) * f = 2 pi i k f1(t) + f2(t) + f3(t),
    gamma(t) = (2 pi)^2 (k^2 + (eta - k t)^2 + l^2),

whose homogeneous factor exp(-nu*(gamma1(t)-gamma1(s))) is exact because
gamma1 is a cubic polynomial in t.  Field-level flows reuse the same
exponent mode-wise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .domain import DomainSpec, SpectralField, TWO_PI
from .operators import (
    VelocityState,
    CoefficientFields,
    deriv,
    inv_laplacian_nonzero,
    multiply_yz,
)

__all__ = [
    "GammaParams",
    "ModeProblem",
    "gamma",
    "gamma1",
    "evolve_mode_exact",
    "liftup_solution",
    "evolve_L0_heat",
    "orr_velocity",
    "evolve_L_field",
    "evolve_L1_field",
]


@dataclass(frozen=True)
class GammaParams:
    k: int
    l: int
    eta: float


def gamma(g: GammaParams, t: float) -> float:
    """Instantaneous squared effective wavenumber, (2 pi)^2 scaled."""
    return float(TWO_PI ** 2 * (g.k ** 2 + (g.eta - g.k * t) ** 2 + g.l ** 2))


def gamma1(g: GammaParams, t: float) -> float:
    """Integral of gamma from 1 to t, in closed form."""
    if g.k == 0:
        return float(TWO_PI ** 2 * (g.eta ** 2 + g.l ** 2) * (t - 1.0))
    cube = ((g.eta - g.k) ** 3 - (g.eta - g.k * t) ** 3) / (3.0 * g.k)
    return float(TWO_PI ** 2 * ((g.k ** 2 + g.l ** 2) * (t - 1.0) + cube))


@dataclass
class ModeProblem:
    """One (k, eta, l) scalar mode with sources on [1, T]."""

    k: int
    l: int
    eta: float
    nu: float
    f_init: complex
    T: float
    a: float = 0.0
    f1: Callable[[float], complex] | None = None
    f2: Callable[[float], complex] | None = None
    f3: Callable[[float], complex] | None = None

    def __post_init__(self):
        if self.T <= 1.0:
            raise ValueError("T must exceed the start time 1")
        if not 0.0 <= self.a <= 4.0:
            raise ValueError("the decay-weight exponent a must lie in [0, 4]")

    @property
    def gamma_params(self) -> GammaParams:
        return GammaParams(self.k, self.l, self.eta)

    def source(self, t: float) -> complex:
        s = 0.0 + 0.0j
        if self.f1 is not None:
            s += TWO_PI * 1j * self.k * self.f1(t)
        if self.f2 is not None:
            s += self.f2(t)
        if self.f3 is not None:
            s += self.f3(t)
        return s


def evolve_mode_exact(
    p: ModeProblem, t_grid, *, epsabs: float = 1e-12, epsrel: float = 1e-11
) -> np.ndarray:
    """Duhamel solution of the mode ODE at the requested times.

    The homogeneous factor is exact; the source integral is evaluated by
    adaptive Gauss-Kronrod quadrature on real and imaginary parts.
    """
    gp = p.gamma_params
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size and (t_grid.min() < 1.0 - 1e-12 or t_grid.max() > p.T + 1e-12):
        raise ValueError("t_grid must lie inside [1, T]")

    has_source = any(f is not None for f in (p.f1, p.f2, p.f3))
    out = np.empty(t_grid.shape, dtype=complex)
    for i, t in enumerate(t_grid):
        g1t = gamma1(gp, t)
        val = np.exp(-p.nu * g1t) * p.f_init
        if has_source and t > 1.0:
            def integrand(s, part):
                w = np.exp(-p.nu * (g1t - gamma1(gp, s)))
                v = w * p.source(s)
                return v.real if part == 0 else v.imag

            re, re_err = quad(
                integrand, 1.0, t, args=(0,), epsabs=epsabs, epsrel=epsrel, limit=400
            )
            im, im_err = quad(
                integrand, 1.0, t, args=(1,), epsabs=epsabs, epsrel=epsrel, limit=400
            )
            if max(re_err, im_err) > 1e-8 * max(1.0, abs(re) + abs(im)):
                raise RuntimeError(
                    f"Duhamel quadrature did not converge at t={t} "
                    f"(error {max(re_err, im_err):.2e})"
                )
            val += re + 1j * im
        out[i] = val
    return out


# ---- field-level heat flow in the shear frame --------------------------------


def heat_exponent_array(
    d: DomainSpec, phase0: float, dt: float, nu: float
) -> np.ndarray:
    """Mode-wise integral nu * (2 pi)^2 int_0^dt |K(phase0+s)|^2 ds.

    K is the effective wavenumber triple; only the y part drifts with
    the phase, at rate -k per unit time.
    """
    k, m, l = d.modes()
    kf = k.astype(float)
    eta0 = m / d.Ly - phase0 * kf  # effective y wavenumber at the start
    perp = kf ** 2 + l.astype(float) ** 2
    etaT = eta0 - kf * dt
    cube = np.where(
        k != 0,
        (eta0 ** 3 - etaT ** 3) / np.where(k != 0, 3.0 * kf, 1.0),
        eta0 ** 2 * dt,
    )
    return nu * TWO_PI ** 2 * (perp * dt + cube)


def heat_multiplier(d: DomainSpec, phase0: float, dt: float, nu: float) -> np.ndarray:
    return np.exp(-heat_exponent_array(d, phase0, dt, nu))


def evolve_L0_heat(
    q: SpectralField, nu: float, t0: float, t1: float
) -> SpectralField:
    """Diffuse q by the shear-frame heat flow from t0 to t1 (exact).

    Each mode is multiplied by exp(-nu * integral of its drifting squared
    wavenumber); the shear phase advances by t1 - t0.
    """
    dt = t1 - t0
    mult = heat_multiplier(q.domain, q.shear_phase, dt, nu)
    return SpectralField(q.coeffs * mult, q.domain, q.shear_phase + dt)


def liftup_solution(ubar0: VelocityState, t: float) -> VelocityState:
    """Exact x-averaged linear evolution from the state `ubar0`.

    The cross-stream components diffuse; the streamwise one picks up the
    integrated forcing -t * u2 before diffusing, which is the transient
    amplification mechanism of streaks.
    """
    d = ubar0.domain
    k, _, _ = d.modes()
    nonzero = k.ravel() != 0
    scale = max(
        float(np.max(np.abs(comp.coeffs))) for comp in ubar0.components()
    )
    for comp in ubar0.components():
        if float(np.max(np.abs(comp.coeffs[nonzero]))) > 1e-13 * (1.0 + scale):
            raise ValueError("liftup_solution expects a k=0-only state")
    ksq = d.ksq(0.0)  # k = 0 modes only, so the phase is irrelevant
    E = np.exp(-d.nu * t * ksq)
    u1 = ubar0.u1.with_coeffs(E * (ubar0.u1.coeffs - t * ubar0.u2.coeffs))
    u2 = ubar0.u2.with_coeffs(E * ubar0.u2.coeffs)
    u3 = ubar0.u3.with_coeffs(E * ubar0.u3.coeffs)
    return replace(ubar0, u1=u1, u2=u2, u3=u3, time=ubar0.time + t)


def orr_velocity(q: SpectralField) -> SpectralField:
    """Recover wall-normal velocity from its Laplacian, mode-wise.

    u2_hat = -q_hat / |K_eff|^2 on k != 0; identical to the nonzero-mode
    inverse Laplacian at the field's shear phase.  As the phase grows the
    divisor grows like (k t)^2, the algebraic decay found by Orr.
    """
    return inv_laplacian_nonzero(q)


# ---- IMEX steppers for the variable-coefficient operators --------------------


def _coeffs_at(c, t: float) -> CoefficientFields:
    return c(t) if callable(c) else c


def _cfl_limit(c: CoefficientFields, d: DomainSpec, cfl: float) -> float:
    umax = float(np.max(np.abs(c.ubar1)))
    kxmax = TWO_PI * (d.nx // 3)
    if umax * kxmax == 0.0:
        return np.inf
    return cfl / (umax * kxmax)


def _imex_heun(
    f: SpectralField,
    explicit,  # (field, t) -> field (same phase)
    nu: float,
    t0: float,
    t1: float,
    dt: float,
) -> SpectralField:
    """Integrating-factor Heun: exact diffusion, 2nd-order explicit part."""
    d = f.domain
    t = t0
    while t < t1 - 1e-12:
        h = min(dt, t1 - t)
        E = heat_multiplier(d, f.shear_phase, h, nu)
        F1 = explicit(f, t)
        pred = SpectralField(
            (f.coeffs + h * F1.coeffs) * E, d, f.shear_phase + h
        )
        F2 = explicit(pred, t + h)
        new = SpectralField(
            (f.coeffs + 0.5 * h * F1.coeffs) * E + 0.5 * h * F2.coeffs,
            d,
            f.shear_phase + h,
        )
        f = new
        t += h
    return f


def evolve_L_field(
    f: SpectralField,
    c,
    rhs: Callable[[float], SpectralField] | None,
    t0: float,
    t1: float,
    dt: float,
    *,
    nu: float | None = None,
    cfl: float = 0.4,
) -> SpectralField:
    """Advance df/dt - nu*Lap(f) + V dx(f) = rhs from t0 to t1.

    The background-shear part of V = y + ubar1 rides on the shear phase,
    so diffusion is handled by the exact drifting-wavenumber multiplier
    and only ubar1 * dx(f) (plus rhs) is explicit.  Coefficients are
    taken frozen at each step midpoint when `c` is callable.
    """
    d = f.domain
    visc = d.nu if nu is None else nu
    limit = _cfl_limit(_coeffs_at(c, 0.5 * (t0 + t1)), d, cfl)
    if dt > limit:
        raise ValueError(
            f"dt={dt} violates the explicit advection limit; use dt <= {limit:.3e}"
        )

    def explicit(g: SpectralField, t: float) -> SpectralField:
        cf = _coeffs_at(c, min(t + 0.5 * dt, t1))
        out = -1.0 * multiply_yz(deriv(g, 0), cf.ubar1)
        if rhs is not None:
            r = rhs(t)
            out = out.with_coeffs(out.coeffs + r.coeffs)
        return out

    return _imex_heun(f, explicit, visc, t0, t1, dt)


def evolve_L1_field(
    f: SpectralField,
    c,
    rhs: Callable[[float], SpectralField] | None,
    t0: float,
    t1: float,
    dt: float,
    *,
    nu: float | None = None,
    cfl: float = 0.4,
) -> SpectralField:
    """Advance the nonlocally-coupled variant of `evolve_L_field`.

    The operator adds -2 (dy + kappa dz) InvLap(dyV * dx f), evaluated
    explicitly each stage with the stationary-frame inverse Laplacian.
    """
    d = f.domain
    visc = d.nu if nu is None else nu
    limit = _cfl_limit(_coeffs_at(c, 0.5 * (t0 + t1)), d, cfl)
    if dt > limit:
        raise ValueError(
            f"dt={dt} violates the explicit advection limit; use dt <= {limit:.3e}"
        )

    def explicit(g: SpectralField, t: float) -> SpectralField:
        cf = _coeffs_at(c, min(t + 0.5 * dt, t1))
        out = -1.0 * multiply_yz(deriv(g, 0), cf.ubar1)
        h = inv_laplacian_nonzero(multiply_yz(deriv(g, 0), cf.dyV))
        nonlocal_term = deriv(h, 1) + multiply_yz(deriv(h, 2), cf.kappa)
        out = out.with_coeffs(out.coeffs + 2.0 * nonlocal_term.coeffs)
        if rhs is not None:
            r = rhs(t)
            out = out.with_coeffs(out.coeffs + r.coeffs)
        return out

    return _imex_heun(f, explicit, visc, t0, t1, dt)
