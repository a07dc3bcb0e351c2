"""Spectral box, transforms, dealiasing and shear-periodic bookkeeping.

The computational domain is x in [0,1), y in [0,Ly), z in [0,1), all
periodic.  The y direction stands in for an unbounded direction, so
fields of interest should be concentrated in the central half
[Ly/4, 3Ly/4); `edge_energy_fraction` monitors how well that holds.

A scalar field is stored as the complex coefficients c[k,m,l] of

    f(x,y,z) = sum_{k,m,l} c[k,m,l] exp(2 pi i (k*xbar + m*y/Ly + l*z)),

where ``xbar = x - shear_phase * y`` is the shear-following streamwise
coordinate.  The effective (stationary-frame) wavenumber of mode
(k,m,l) is therefore (k, m/Ly - shear_phase*k, l), which is what every
derivative, norm and multiplier in this package uses.  Advancing
``shear_phase`` at unit rate makes the background-shear advection term
exact; `remesh` keeps the phase bounded by relabelling m.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DomainSpec:
    """Grid sizes, y period and viscosity of the box."""

    nx: int
    ny: int
    nz: int
    Ly: float = 4.0
    nu: float = 1e-2

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n!r}")
        if self.Ly < 1.0:
            raise ValueError(f"Ly must be >= 1, got {self.Ly}")
        if self.nu <= 0.0:
            raise ValueError(f"nu must be positive, got {self.nu}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_total(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def volume(self) -> float:
        # x and z periods are 1
        return self.Ly

    # ---- mode indices and wavenumbers -------------------------------------

    def modes(self):
        """Integer mode index arrays (k, m, l), broadcastable to `shape`."""
        return _mode_indices(self)

    def dealias_mask(self) -> np.ndarray:
        """Boolean mask of modes kept by the 2/3 rule (per direction)."""
        return _dealias_mask(self)

    def wavenumbers(self, phase: float):
        """Effective wavenumbers (KX, KY, KZ), 2*pi included, at `phase`."""
        k, m, l = self.modes()
        kx, eta, kz = _base_wavenumbers(self)
        ky = eta - TWO_PI * phase * k
        return kx, ky, kz

    def ksq(self, phase: float) -> np.ndarray:
        kx, ky, kz = self.wavenumbers(phase)
        return kx * kx + ky * ky + kz * kz

    def grid(self):
        """Collocation coordinates (x, y, z), broadcastable to `shape`.

        In sheared representation the first coordinate is xbar; the grid
        itself is uniform either way.
        """
        x = (np.arange(self.nx) / self.nx).reshape(-1, 1, 1)
        y = (np.arange(self.ny) * (self.Ly / self.ny)).reshape(1, -1, 1)
        z = (np.arange(self.nz) / self.nz).reshape(1, 1, -1)
        return x, y, z


@lru_cache(maxsize=32)
def _mode_indices(d: DomainSpec):
    k = np.fft.fftfreq(d.nx, 1.0 / d.nx).astype(np.int64).reshape(-1, 1, 1)
    m = np.fft.fftfreq(d.ny, 1.0 / d.ny).astype(np.int64).reshape(1, -1, 1)
    l = np.fft.fftfreq(d.nz, 1.0 / d.nz).astype(np.int64).reshape(1, 1, -1)
    for a in (k, m, l):
        a.flags.writeable = False
    return k, m, l


@lru_cache(maxsize=32)
def _base_wavenumbers(d: DomainSpec):
    k, m, l = _mode_indices(d)
    kx = TWO_PI * k.astype(float)
    eta = TWO_PI * m.astype(float) / d.Ly
    kz = TWO_PI * l.astype(float)
    for a in (kx, eta, kz):
        a.flags.writeable = False
    return kx, eta, kz


@lru_cache(maxsize=32)
def _dealias_mask(d: DomainSpec) -> np.ndarray:
    k, m, l = _mode_indices(d)
    mask = (
        (np.abs(k) <= d.nx // 3)
        & (np.abs(m) <= d.ny // 3)
        & (np.abs(l) <= d.nz // 3)
    )
    mask.flags.writeable = False
    return mask


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex mode coefficients of one scalar field, plus shear phase."""

    coeffs: np.ndarray
    domain: DomainSpec
    shear_phase: float = 0.0

    def __post_init__(self):
        if self.coeffs.shape != self.domain.shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match "
                f"domain {self.domain.shape}"
            )

    def copy(self) -> "SpectralField":
        return replace(self, coeffs=self.coeffs.copy())

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return replace(self, coeffs=coeffs)

    # value-style algebra; phases must agree
    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_compatible(self, other)
        return replace(self, coeffs=self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_compatible(self, other)
        return replace(self, coeffs=self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return replace(self, coeffs=self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return replace(self, coeffs=-self.coeffs)


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real values on the collocation grid."""

    values: np.ndarray
    domain: DomainSpec

    def __post_init__(self):
        if self.values.shape != self.domain.shape:
            raise ValueError(
                f"value shape {self.values.shape} does not match "
                f"domain {self.domain.shape}"
            )


def _check_compatible(a: SpectralField, b: SpectralField):
    if a.domain != b.domain:
        raise ValueError("fields live on different domains")
    if abs(a.shear_phase - b.shear_phase) > 1e-12 * (1.0 + abs(a.shear_phase)):
        raise ValueError(
            f"shear phases differ: {a.shear_phase} vs {b.shear_phase}"
        )


def zeros(d: DomainSpec, phase: float = 0.0) -> SpectralField:
    return SpectralField(np.zeros(d.shape, dtype=complex), d, phase)


# ---- transforms ------------------------------------------------------------


def forward_transform(p: PhysicalField, d: DomainSpec | None = None) -> SpectralField:
    """Grid values -> mode coefficients, normalised by 1/(nx*ny*nz).

    With this normalisation Parseval reads
    integral |p|^2 = Ly * sum |c|^2, i.e. `volume * mean(|p|^2)`.
    The result carries shear_phase 0.
    """
    dom = d or p.domain
    if p.values.shape != dom.shape:
        raise ValueError("array dims do not match the domain")
    c = np.fft.fftn(p.values) / dom.n_total
    return SpectralField(c, dom, 0.0)


def hermitian_defect(f: SpectralField) -> float:
    """Relative size of c[-k,-m,-l] - conj(c[k,m,l])."""
    c = f.coeffs
    rev = np.conj(np.roll(np.flip(c, axis=(0, 1, 2)), 1, axis=(0, 1, 2)))
    scale = np.linalg.norm(c.ravel())
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm((c - rev).ravel()) / scale)


def inverse_transform(f: SpectralField, d: DomainSpec | None = None) -> PhysicalField:
    """Mode coefficients -> real grid values (exact inverse of forward).

    Rejects fields whose coefficients break Hermitian symmetry by more
    than 1e-10 in relative l2, since those do not represent a real field.
    """
    dom = d or f.domain
    defect = hermitian_defect(f)
    if defect > 1e-10:
        raise ValueError(
            f"coefficients are not Hermitian-symmetric (defect {defect:.2e}); "
            "field does not represent a real scalar"
        )
    vals = np.fft.ifftn(f.coeffs * dom.n_total)
    return PhysicalField(vals.real, dom)


def physical_values(f: SpectralField) -> np.ndarray:
    """Complex grid values without the reality check (internal work paths)."""
    return np.fft.ifftn(f.coeffs * f.domain.n_total)


def from_values(values: np.ndarray, d: DomainSpec, phase: float = 0.0) -> SpectralField:
    """fftn of (possibly complex) grid values, tagged with `phase`."""
    return SpectralField(np.fft.fftn(values) / d.n_total, d, phase)


def dealias(f: SpectralField) -> SpectralField:
    """Zero every mode with any |index| beyond the 2/3-rule band."""
    return f.with_coeffs(np.where(f.domain.dealias_mask(), f.coeffs, 0.0))


# ---- shear bookkeeping -----------------------------------------------------


def sheared_wavenumber(d: DomainSpec, phase: float, mode: tuple[int, int, int]):
    """Effective wavenumber (2 pi scaled) of integer mode (k,m,l) at `phase`."""
    k, m, l = mode
    return (TWO_PI * k, TWO_PI * (m / d.Ly - phase * k), TWO_PI * l)


# remesh once the accumulated phase tilts modes by half a y-mode spacing
REMESH_THRESHOLD = 0.5


def needs_remesh(f: SpectralField) -> bool:
    return abs(f.shear_phase) * f.domain.Ly >= REMESH_THRESHOLD - 1e-12


def remesh(f: SpectralField, d: DomainSpec | None = None):
    """Reduce shear_phase by an integer number of y-mode spacings.

    Coefficients are relabelled m -> m - n*k with n = round(phase*Ly),
    which leaves every mode's effective wavenumber (hence the physical
    field) unchanged.  Modes whose new label falls outside the 2/3 band
    are discarded and their energy fraction is returned for monitoring.

    Returns (field, dropped_energy_fraction).
    """
    dom = d or f.domain
    n = int(np.floor(f.shear_phase * dom.Ly + 0.5))
    if n == 0:
        return f, 0.0

    c = f.coeffs
    total = float(np.sum(np.abs(c) ** 2))
    new = np.zeros_like(c)
    m_band = dom.ny // 3
    k_idx, m_idx, _ = dom.modes()
    m_line = m_idx.ravel()  # fft-ordered integer m labels
    for ik, k_int in enumerate(k_idx.ravel()):
        shift = -n * int(k_int)
        if shift == 0:
            new[ik] = c[ik]
            continue
        m_new = m_line + shift
        keep = np.abs(m_new) <= m_band
        src = np.nonzero(keep)[0]
        dst = (m_new[keep] % dom.ny).astype(np.int64)
        new[ik][dst] = c[ik][src]
    # truncate to the dealias band: relabelled modes must stay usable in
    # pseudo-spectral products
    new = np.where(dom.dealias_mask(), new, 0.0)

    kept = float(np.sum(np.abs(new) ** 2))
    dropped = 0.0 if total == 0.0 else max(0.0, (total - kept) / total)
    return SpectralField(new, dom, f.shear_phase - n / dom.Ly), dropped


# ---- basic reductions -------------------------------------------------------


def spectral_l2(f: SpectralField) -> float:
    """L2 norm of the represented field: sqrt(Ly * sum |c|^2)."""
    return float(np.sqrt(f.domain.volume * np.sum(np.abs(f.coeffs) ** 2)))


def grid_l2(p: PhysicalField) -> float:
    return float(np.sqrt(p.domain.volume * np.mean(p.values ** 2)))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """Real L2 inner product of two real fields given spectrally."""
    _check_compatible(f, g)
    return float(f.domain.volume * np.real(np.sum(f.coeffs * np.conj(g.coeffs))))


def edge_energy_fraction(f: SpectralField) -> float:
    """Energy fraction in the outer 10% of the y range (truncation monitor)."""
    vals = physical_values(f)
    e = np.abs(vals) ** 2
    ny = f.domain.ny
    w = max(1, int(round(0.05 * ny)))  # 5% at each end = outer 10%
    outer = e[:, :w, :].sum() + e[:, ny - w:, :].sum()
    tot = e.sum()
    return float(outer / tot) if tot > 0 else 0.0
