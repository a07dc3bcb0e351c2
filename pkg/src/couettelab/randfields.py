"""Seeded random fields: simulation initial conditions and test ensembles.

Ensembles are band limited with a mild spectral slope and uniform random
phases; structural constraints (reality, zero x-average, incompressibility,
y localisation) are imposed by projection after generation.
"""
from __future__ import annotations

import numpy as np

from .domain import DomainSpec, SpectralField, dealias, from_values, physical_values
from .operators import VelocityState, leray_project, project_nonzero, project_zero
from . import norms

__all__ = [
    "random_band_limited",
    "random_scalar",
    "random_zero_mode_scalar",
    "random_divfree_state",
    "oblique_streak_state",
    "make_initial_condition",
]


def _hermitify(c: np.ndarray) -> np.ndarray:
    rev = np.conj(np.roll(np.flip(c, axis=(0, 1, 2)), 1, axis=(0, 1, 2)))
    return 0.5 * (c + rev)


def random_band_limited(
    d: DomainSpec,
    rng: np.random.Generator,
    kmax: int | tuple[int, int, int] | None = None,
    slope: float = -2.0,
) -> SpectralField:
    """Real random scalar with |c| ~ (1+|idx|^2)^(slope/2) inside the band."""
    if kmax is None:
        kmax = (d.nx // 4, d.ny // 4, d.nz // 4)
    if isinstance(kmax, int):
        kmax = (kmax, kmax, kmax)
    k, m, l = d.modes()
    band = (np.abs(k) <= kmax[0]) & (np.abs(m) <= kmax[1]) & (np.abs(l) <= kmax[2])
    mag = (1.0 + k ** 2 + m ** 2 + l ** 2) ** (slope / 2.0)
    phase = rng.uniform(0.0, 2.0 * np.pi, d.shape)
    c = np.where(band, mag * np.exp(1j * phase), 0.0)
    c = _hermitify(c)
    c[0, 0, 0] = 0.0
    return dealias(SpectralField(c, d, 0.0))


def random_scalar(
    d: DomainSpec,
    rng: np.random.Generator,
    *,
    kmax=None,
    slope: float = -2.0,
    x_independent: bool = False,
    zero_mean_in_x: bool = False,
) -> SpectralField:
    f = random_band_limited(d, rng, kmax=kmax, slope=slope)
    if x_independent:
        f = project_zero(f)
    if zero_mean_in_x:
        f = project_nonzero(f)
    return f


def random_zero_mode_scalar(
    d: DomainSpec,
    rng: np.random.Generator,
    h4_norm: float,
    kmax: int = 3,
) -> SpectralField:
    """x-independent scalar scaled to a prescribed H^4 norm (streak samples)."""
    f = project_zero(random_band_limited(d, rng, kmax=kmax))
    n = norms.sobolev_norm(f, 4.0)
    if n == 0.0:
        raise RuntimeError("degenerate random sample")
    return f * (h4_norm / n)


def _y_window(d: DomainSpec) -> np.ndarray:
    """Smooth bump concentrating mass in the central half of the y range."""
    y = np.arange(d.ny) * (d.Ly / d.ny)
    sigma = d.Ly / 4.5
    w = np.exp(-(((y - 0.5 * d.Ly) / sigma) ** 4))
    return w.reshape(1, -1, 1)


def _windowed(f: SpectralField) -> SpectralField:
    vals = physical_values(f) * _y_window(f.domain)
    return dealias(from_values(vals, f.domain, f.shear_phase))


def _state_h2(u: VelocityState) -> float:
    return norms.vector_norm([norms.sobolev_norm(c, 2.0) for c in u.components()])


def _scale_state(u: VelocityState, factor: float) -> VelocityState:
    return u.map(lambda f: f * factor)


def random_divfree_state(
    d: DomainSpec,
    rng: np.random.Generator,
    h2_norm: float,
    *,
    kmax: int = 3,
    neq_fraction: float = 0.15,
    localize_y: bool = True,
    time: float = 0.0,
) -> VelocityState:
    """Divergence-free random velocity with prescribed H^2 norm.

    `neq_fraction` fixes the share of squared H^2 mass carried by
    nonzero-x modes; the remainder sits in the x-averaged (streak/roll)
    part.  Transition-type initial data is streak-dominated, and the
    decay-weighted functionals only stay within their intended margins
    when the nonzero-mode share is moderate.
    """
    comps = [random_band_limited(d, rng, kmax=kmax) for _ in range(3)]
    if localize_y:
        comps = [_windowed(f) for f in comps]
    u = leray_project(
        VelocityState(u1=comps[0], u2=comps[1], u3=comps[2], time=time)
    )
    u = u.map(dealias)

    uzero = u.map(project_zero)
    uneq = u.map(project_nonzero)
    n0 = _state_h2(uzero)
    n1 = _state_h2(uneq)
    if n0 == 0.0 or n1 == 0.0:
        raise RuntimeError("degenerate random initial condition")
    a0 = np.sqrt(1.0 - neq_fraction) * h2_norm / n0
    a1 = np.sqrt(neq_fraction) * h2_norm / n1
    out = VelocityState(
        u1=uzero.u1 * a0 + uneq.u1 * a1,
        u2=uzero.u2 * a0 + uneq.u2 * a1,
        u3=uzero.u3 * a0 + uneq.u3 * a1,
        time=time,
    )
    return out


def oblique_streak_state(
    d: DomainSpec,
    rng: np.random.Generator,
    h2_norm: float,
    *,
    oblique_fraction: float = 0.2,
    time: float = 0.0,
) -> VelocityState:
    """Streamwise rolls plus a pair of oblique waves, the classical seed."""
    k, m, l = d.modes()
    zero = np.zeros(d.shape, dtype=complex)

    # rolls: x-independent streamfunction with one y-z mode
    psi = zero.copy()
    mr = max(1, int(round(d.Ly)))  # O(1) roll wavelength in y
    psi[0, mr % d.ny, 1] = 0.25
    psi = _hermitify(psi)
    psi_f = SpectralField(psi, d, 0.0)
    kx, ky, kz = d.wavenumbers(0.0)
    u2 = psi_f.with_coeffs(1j * kz * psi_f.coeffs)
    u3 = psi_f.with_coeffs(-1j * ky * psi_f.coeffs)
    rolls = VelocityState(
        u1=SpectralField(zero.copy(), d, 0.0), u2=u2, u3=u3, time=time
    )

    # oblique pair on (k,l) = (1, +-1), random phase, projected
    ob = zero.copy()
    ph = rng.uniform(0.0, 2.0 * np.pi, 2)
    ob[1, mr % d.ny, 1] = np.exp(1j * ph[0])
    ob[1, mr % d.ny, (-1) % d.nz] = np.exp(1j * ph[1])
    ob = _hermitify(ob)
    oblique = leray_project(
        VelocityState(
            u1=SpectralField(zero.copy(), d, 0.0),
            u2=SpectralField(zero.copy(), d, 0.0),
            u3=SpectralField(ob, d, 0.0),
            time=time,
        )
    )

    rolls = _windowed_state(rolls)
    oblique = _windowed_state(oblique)
    rolls = leray_project(rolls).map(dealias)
    oblique = leray_project(oblique).map(dealias)

    nr = _state_h2(rolls)
    no = _state_h2(oblique)
    ar = np.sqrt(1.0 - oblique_fraction) * h2_norm / nr
    ao = np.sqrt(oblique_fraction) * h2_norm / no
    return VelocityState(
        u1=rolls.u1 * ar + oblique.u1 * ao,
        u2=rolls.u2 * ar + oblique.u2 * ao,
        u3=rolls.u3 * ar + oblique.u3 * ao,
        time=time,
    )


def _windowed_state(u: VelocityState) -> VelocityState:
    return u.map(_windowed)


IC_GENERATORS = {
    "random": random_divfree_state,
    "oblique_streak": oblique_streak_state,
}


def make_initial_condition(
    d: DomainSpec,
    name: str,
    amplitude: float,
    seed: int,
    time: float = 0.0,
    **params,
) -> VelocityState:
    """Named, seeded generator dispatch; amplitude is the H^2 norm."""
    if name == "zero":
        z = SpectralField(np.zeros(d.shape, dtype=complex), d, 0.0)
        return VelocityState(u1=z, u2=z.copy(), u3=z.copy(), time=time)
    if name not in IC_GENERATORS:
        raise ValueError(
            f"unknown initial condition {name!r}; "
            f"choose from {['zero', *IC_GENERATORS]}"
        )
    if amplitude == 0.0:
        return make_initial_condition(d, "zero", 0.0, seed, time)
    rng = np.random.default_rng(seed)
    return IC_GENERATORS[name](d, rng, amplitude, time=time, **params)
