"""Field-level linear operators for the perturbation system.

Everything here acts mode-wise with the *effective* wavenumbers of the
field's shear phase, so the same code serves the stationary frame
(phase 0) and the shear-following frame.  Products with x-averaged
coefficient fields (kappa, dV/dy, ...) are formed in physical space and
dealiased.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .domain import (
    DomainSpec,
    SpectralField,
    dealias,
    physical_values,
    from_values,
)

__all__ = [
    "VelocityState",
    "CoefficientFields",
    "project_zero",
    "project_nonzero",
    "gradient",
    "divergence",
    "leray_project",
    "inv_laplacian_nonzero",
    "solve_poisson",
    "solve_pressure_linear",
    "pressure_decomposition",
    "compute_coefficients",
    "compute_W2",
    "good_derivative",
    "reconstruct_u1",
]


@dataclass(frozen=True, eq=False)
class VelocityState:
    """Three spectral velocity components sharing one shear phase."""

    u1: SpectralField
    u2: SpectralField
    u3: SpectralField
    time: float = 0.0

    def __post_init__(self):
        d = self.u1.domain
        p = self.u1.shear_phase
        for comp in (self.u2, self.u3):
            if comp.domain != d:
                raise ValueError("velocity components live on different domains")
            if abs(comp.shear_phase - p) > 1e-12 * (1.0 + abs(p)):
                raise ValueError("velocity components carry different shear phases")

    @property
    def domain(self) -> DomainSpec:
        return self.u1.domain

    @property
    def shear_phase(self) -> float:
        return self.u1.shear_phase

    def components(self):
        return (self.u1, self.u2, self.u3)

    def map(self, fn) -> "VelocityState":
        return replace(self, u1=fn(self.u1), u2=fn(self.u2), u3=fn(self.u3))


# ---- mode projections -------------------------------------------------------


def project_zero(f: SpectralField) -> SpectralField:
    """Keep only the x-average (k=0 modes)."""
    k, _, _ = f.domain.modes()
    return f.with_coeffs(np.where(k == 0, f.coeffs, 0.0))


def project_nonzero(f: SpectralField) -> SpectralField:
    k, _, _ = f.domain.modes()
    return f.with_coeffs(np.where(k == 0, 0.0, f.coeffs))


# ---- derivatives ------------------------------------------------------------


def gradient(f: SpectralField):
    """(d/dx, d/dy, d/dz) f in the stationary frame, as three fields."""
    kx, ky, kz = f.domain.wavenumbers(f.shear_phase)
    return (
        f.with_coeffs(1j * kx * f.coeffs),
        f.with_coeffs(1j * ky * f.coeffs),
        f.with_coeffs(1j * kz * f.coeffs),
    )


def deriv(f: SpectralField, axis: int) -> SpectralField:
    k = f.domain.wavenumbers(f.shear_phase)[axis]
    return f.with_coeffs(1j * k * f.coeffs)


def laplacian(f: SpectralField) -> SpectralField:
    return f.with_coeffs(-f.domain.ksq(f.shear_phase) * f.coeffs)


def divergence(u: VelocityState) -> SpectralField:
    kx, ky, kz = u.domain.wavenumbers(u.shear_phase)
    c = 1j * (kx * u.u1.coeffs + ky * u.u2.coeffs + kz * u.u3.coeffs)
    return u.u1.with_coeffs(c)


def divergence_defect(u: VelocityState) -> float:
    """max_mode |K . u_hat| / ||u_hat||, the per-mode incompressibility error."""
    kx, ky, kz = u.domain.wavenumbers(u.shear_phase)
    div = np.abs(kx * u.u1.coeffs + ky * u.u2.coeffs + kz * u.u3.coeffs)
    mag = np.sqrt(
        np.abs(u.u1.coeffs) ** 2 + np.abs(u.u2.coeffs) ** 2 + np.abs(u.u3.coeffs) ** 2
    )
    kmag = np.sqrt(u.domain.ksq(u.shear_phase))
    scale = float(np.max(mag * np.where(kmag > 0, kmag, 1.0)))
    return 0.0 if scale == 0.0 else float(np.max(div)) / scale


# ---- Helmholtz-Leray projection ---------------------------------------------


def leray_project(u: VelocityState) -> VelocityState:
    """Remove the gradient part: u - K (K . u)/|K|^2 per mode."""
    kx, ky, kz = u.domain.wavenumbers(u.shear_phase)
    ksq = kx * kx + ky * ky + kz * kz
    inv = np.where(ksq > 0.0, 1.0 / np.where(ksq > 0.0, ksq, 1.0), 0.0)
    kdotu = kx * u.u1.coeffs + ky * u.u2.coeffs + kz * u.u3.coeffs
    proj = kdotu * inv
    return replace(
        u,
        u1=u.u1.with_coeffs(u.u1.coeffs - kx * proj),
        u2=u.u2.with_coeffs(u.u2.coeffs - ky * proj),
        u3=u.u3.with_coeffs(u.u3.coeffs - kz * proj),
    )


# ---- inverse Laplacians and pressure solves ----------------------------------


def inv_laplacian_nonzero(f: SpectralField) -> SpectralField:
    """Inverse Laplacian restricted to k != 0 modes; k = 0 is zeroed."""
    k, _, _ = f.domain.modes()
    ksq = f.domain.ksq(f.shear_phase)
    out = np.where((k != 0) & (ksq > 0), -f.coeffs / np.where(ksq > 0, ksq, 1.0), 0.0)
    return f.with_coeffs(out)


def solve_poisson(f: SpectralField) -> SpectralField:
    """Solve Laplace(p) = f for all modes except the (0,0,0) mean."""
    ksq = f.domain.ksq(f.shear_phase)
    out = np.where(ksq > 0, -f.coeffs / np.where(ksq > 0, ksq, 1.0), 0.0)
    return f.with_coeffs(out)


def solve_pressure_linear(u2: SpectralField) -> SpectralField:
    """Pressure sourced by the background shear: Laplace(p) = -2 du2/dx."""
    return solve_poisson(deriv(u2, 0) * (-2.0))


def multiply_fields(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased pseudo-spectral product of two fields at equal phase."""
    if abs(f.shear_phase - g.shear_phase) > 1e-12 * (1.0 + abs(f.shear_phase)):
        raise ValueError("product of fields at different shear phases")
    vals = physical_values(f) * physical_values(g)
    return dealias(from_values(vals, f.domain, f.shear_phase))


def multiply_yz(f: SpectralField, w: np.ndarray) -> SpectralField:
    """Dealiased product with an x-independent coefficient grid w(y,z)."""
    vals = physical_values(f) * w[None, :, :]
    return dealias(from_values(vals, f.domain, f.shear_phase))


def pressure_decomposition(u: VelocityState, c: "CoefficientFields | None" = None):
    """Split the quadratic pressure by mode interaction class.

    Returns (p1, p2, p3, p4) with
        Laplace p1 = -2 (dy(ubar1) dx(u2_neq) + dz(ubar1) dx(u3_neq))
        Laplace p2 = -di(ubar_j) dj(ubar_i)
        Laplace p3 = -2 d_alpha(ubar_beta) d_beta(u_neq_alpha),  alpha,beta in {y,z}
        Laplace p4 = -di(u_neq_j) dj(u_neq_i)
    and p1+p2+p3+p4 equal to the full quadratic pressure.
    """
    del c  # coefficient fields are derivable from u; kept for interface parity
    d = u.domain
    ubar = [project_zero(comp) for comp in u.components()]
    uneq = [project_nonzero(comp) for comp in u.components()]

    gbar = [gradient(comp) for comp in ubar]   # gbar[j][i] = d_i ubar^j
    gneq = [gradient(comp) for comp in uneq]

    # p1: streak u1 against streamwise derivatives of the cross-stream flow
    src1 = (
        multiply_fields(gbar[0][1], deriv(uneq[1], 0))
        + multiply_fields(gbar[0][2], deriv(uneq[2], 0))
    ) * (-2.0)
    p1 = solve_poisson(src1)

    zero = u.u1.with_coeffs(np.zeros_like(u.u1.coeffs))
    src2 = zero
    src4 = zero
    for i in range(3):
        for j in range(3):
            src2 = src2 - multiply_fields(gbar[j][i], gbar[i][j])
            src4 = src4 - multiply_fields(gneq[j][i], gneq[i][j])
    p2 = solve_poisson(src2)
    p4 = solve_poisson(src4)

    src3 = zero
    for a in (1, 2):
        for b in (1, 2):
            src3 = src3 - 2.0 * multiply_fields(gbar[b][a], gneq[a][b])
    p3 = solve_poisson(src3)
    return p1, p2, p3, p4


def pressure_nonlinear(u: VelocityState) -> SpectralField:
    """Direct solve of Laplace(p) = -di(u_j) dj(u_i) (all of u at once)."""
    grads = [gradient(comp) for comp in u.components()]
    src = u.u1.with_coeffs(np.zeros_like(u.u1.coeffs))
    for i in range(3):
        for j in range(3):
            src = src - multiply_fields(grads[j][i], grads[i][j])
    return solve_poisson(src)


# ---- coefficient fields of the x-averaged streak -----------------------------


@dataclass(frozen=True, eq=False)
class CoefficientFields:
    """y-z grids derived from the streak profile V = y + ubar1.

    kappa = dz(V)/dy(V); rho1, rho2 are the curvature ratios entering the
    rewriting of grad(kappa).grad(f); the psi/G/H grids express the same
    data on the image grid of the map y -> V(y,z) (uniform in Y), where
    the sheared diffusion takes divergence form.
    """

    domain: DomainSpec
    valid_time: float
    V: np.ndarray
    dyV: np.ndarray
    dzV: np.ndarray
    kappa: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    ubar1: np.ndarray
    dt_ubar1: np.ndarray
    psi_t: np.ndarray | None = None
    psi_y: np.ndarray | None = None
    psi_z: np.ndarray | None = None
    G: np.ndarray | None = None
    H: np.ndarray | None = None


def _yz_values(f: SpectralField) -> np.ndarray:
    """Real y-z grid of a k=0-only field."""
    c2 = f.coeffs[0, :, :] * f.domain.n_total / f.domain.nx
    return np.real(np.fft.ifft2(c2))


def _yz_spectral(vals: np.ndarray, d: DomainSpec) -> np.ndarray:
    return np.fft.fft2(vals) / (d.ny * d.nz)


def _yz_deriv(vals: np.ndarray, d: DomainSpec, axis: int) -> np.ndarray:
    c = _yz_spectral(vals, d)
    m = np.fft.fftfreq(d.ny, 1.0 / d.ny).reshape(-1, 1)
    l = np.fft.fftfreq(d.nz, 1.0 / d.nz).reshape(1, -1)
    k = (2.0 * np.pi) * (m / d.Ly if axis == 0 else l)
    return np.real(np.fft.ifft2(1j * k * c * (d.ny * d.nz)))


def compute_coefficients(
    ubar1: SpectralField,
    dt_ubar1: SpectralField | None,
    d: DomainSpec | None = None,
    *,
    time: float = 0.0,
    with_transform: bool = True,
) -> CoefficientFields:
    """Build every streak-derived coefficient grid at one instant.

    `ubar1` (and its time derivative, if given) must be x-independent.
    Requires the slope condition max|dy(ubar1)| < 1/2, outside which the
    change of variables y -> V degenerates and the run has left the
    small-streak regime.
    """
    dom = d or ubar1.domain
    k, _, _ = dom.modes()
    if np.max(np.abs(ubar1.coeffs[k.ravel() != 0])) > 1e-12 * (
        1.0 + np.max(np.abs(ubar1.coeffs))
    ):
        raise ValueError("ubar1 must contain only k=0 modes")

    u1 = _yz_values(ubar1)
    du1dt = _yz_values(dt_ubar1) if dt_ubar1 is not None else np.zeros_like(u1)
    dyu1 = _yz_deriv(u1, dom, 0)
    dzu1 = _yz_deriv(u1, dom, 1)
    slope = float(np.max(np.abs(dyu1)))
    if slope >= 0.5:
        raise ValueError(
            f"max|dy ubar1| = {slope:.3f} >= 1/2: streak slope too steep, "
            "coefficient fields are outside their validity regime"
        )

    y = (np.arange(dom.ny) * (dom.Ly / dom.ny)).reshape(-1, 1)
    V = y + u1
    dyV = 1.0 + dyu1
    dzV = dzu1
    kappa = dzV / dyV
    dyk = _yz_deriv(kappa, dom, 0)
    dzk = _yz_deriv(kappa, dom, 1)
    rho1 = (dyk + kappa * dzk) / (dyV * (1.0 + kappa ** 2))
    rho2 = (dzk - kappa * dyk) / (1.0 + kappa ** 2)

    cf = CoefficientFields(
        domain=dom,
        valid_time=time,
        V=V,
        dyV=dyV,
        dzV=dzV,
        kappa=kappa,
        rho1=rho1,
        rho2=rho2,
        ubar1=u1,
        dt_ubar1=du1dt,
    )
    if not with_transform:
        return cf

    lap_u1 = _yz_deriv(dyu1, dom, 0) + _yz_deriv(dzu1, dom, 1)
    psi_t = np.empty_like(u1)
    psi_y = np.empty_like(u1)
    psi_z = np.empty_like(u1)
    H = np.empty_like(u1)
    ygrid = y.ravel()
    Ly = dom.Ly
    for jz in range(dom.nz):
        ystar = _invert_streak_column(u1[:, jz], ygrid, Ly)
        for grid, src in (
            (psi_t, du1dt[:, jz]),
            (psi_y, dyu1[:, jz]),
            (psi_z, dzu1[:, jz]),
            (H, lap_u1[:, jz]),
        ):
            spl = _periodic_spline(ygrid, src, Ly)
            grid[:, jz] = spl(ystar % Ly)
    G = (1.0 + psi_y) ** 2 + psi_z ** 2 - 1.0
    return replace(cf, psi_t=psi_t, psi_y=psi_y, psi_z=psi_z, G=G, H=H)


def _periodic_spline(x: np.ndarray, vals: np.ndarray, period: float) -> CubicSpline:
    xx = np.concatenate([x, [x[0] + period]])
    vv = np.concatenate([vals, [vals[0]]])
    return CubicSpline(xx, vv, bc_type="periodic")


def _invert_streak_column(u1col: np.ndarray, y: np.ndarray, Ly: float) -> np.ndarray:
    """Solve y* + u1(y*) = Y for each uniform target Y (V strictly increasing).

    Vectorised Newton from y* = Y with a per-point bisection fallback,
    to 1e-12.
    """
    spl = _periodic_spline(y, u1col, Ly)
    dspl = spl.derivative()
    amp = float(np.max(np.abs(u1col))) + 1e-15
    ystar = y - spl(y % Ly)  # first-order guess
    for _ in range(50):
        r = ystar + spl(ystar % Ly) - y
        if np.max(np.abs(r)) < 1e-12:
            break
        ystar = ystar - r / (1.0 + dspl(ystar % Ly))
    else:
        # slope near the 1/2 limit can stall Newton; bisect the stragglers
        bad = np.abs(ystar + spl(ystar % Ly) - y) >= 1e-12
        for i in np.nonzero(bad)[0]:
            lo, hi = y[i] - amp, y[i] + amp
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid + spl(mid % Ly) - y[i] > 0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-13:
                    break
            ystar[i] = 0.5 * (lo + hi)
    return ystar


# ---- streak-adapted combinations ---------------------------------------------


def compute_W2(u: VelocityState, c: CoefficientFields) -> SpectralField:
    """W2 = u2_neq + kappa * u3_neq, the shear-aligned wall-normal velocity."""
    u2n = project_nonzero(u.u2)
    u3n = project_nonzero(u.u3)
    return u2n + multiply_yz(u3n, c.kappa)


def good_derivative(f: SpectralField, c: CoefficientFields) -> SpectralField:
    """(d/dz - kappa d/dy) f: the derivative along level sets of V."""
    return deriv(f, 2) - multiply_yz(deriv(f, 1), c.kappa)


def reconstruct_u1(u2: SpectralField, u3: SpectralField) -> SpectralField:
    """Streamwise velocity of a divergence-free nonzero-mode field.

    From K . u = 0:  u1_hat = -(KY u2_hat + KZ u3_hat)/KX on k != 0.
    """
    d = u2.domain
    kx, ky, kz = d.wavenumbers(u2.shear_phase)
    k, _, _ = d.modes()
    safe = np.where(k != 0, kx, 1.0)
    c = np.where(k != 0, -(ky * u2.coeffs + kz * u3.coeffs) / safe, 0.0)
    return u2.with_coeffs(c)
