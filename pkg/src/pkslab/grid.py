"""Periodic-box discretization of R^d and the spectral primitives built on it.

Transform convention
--------------------
Points are ``x_j = -L/2 + j*h`` on every axis, so the box is centred on the
origin.  Spectral coefficients are taken relative to that origin::

    fhat(xi) = (1/N) * sum_j f(x_j) exp(-i xi.x_j),   N = n**d

so the zero mode is the box mean ``(1/L^d) * integral(f)`` and the inverse
is the plain sum ``f(x_j) = sum_xi fhat(xi) exp(i xi.x_j)``.  Plancherel
reads ``h^d * sum |f|^2 == L^d * sum |fhat|^2``.

Wavenumbers on each axis are ``2*pi*m/L`` for ``m = -n/2 .. n/2-1`` stored
in FFT order.  The single Nyquist mode ``m = -n/2`` has no partner, so odd
derivatives zero it along the differentiated axis.

The solvers in :mod:`pkslab.evolution` skip the origin phase and work on
half-spectra (``rfftn``) through :class:`RealSpectralOps`; every operator
they use is a diagonal multiplier, so the phase cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ResolutionError

MAX_DERIVATIVE_ORDER = 12
HERMITIAN_TOL = 1e-9


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid of ``n_per_axis**dim`` points on ``[-L/2, L/2)^dim``."""

    dim: int
    n_per_axis: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = self.n_per_axis
        if int(n) != n or n < 8 or n % 2:
            raise ValueError(f"n_per_axis must be an even integer >= 8, got {n}")
        if not (self.box_length > 0 and math.isfinite(self.box_length)):
            raise ValueError(f"box_length must be positive, got {self.box_length}")
        object.__setattr__(self, "n_per_axis", int(n))
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.n_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def validity_horizon(self) -> float:
        """Largest t with 4*sqrt(t) <= L/4; whole-space decay laws hold before it."""
        return (self.box_length / 16.0) ** 2

    @cached_property
    def axis_modes(self) -> np.ndarray:
        """Integer mode numbers in FFT order (``-n/2`` sits at index ``n/2``)."""
        m = np.fft.fftfreq(self.n_per_axis, d=1.0 / self.n_per_axis)
        return np.round(m).astype(np.int64)

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * self.axis_modes / self.box_length

    @cached_property
    def axis_coordinates(self) -> np.ndarray:
        return -0.5 * self.box_length + self.spacing * np.arange(self.n_per_axis)

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis (sparse meshgrid)."""
        return list(np.meshgrid(*([self.axis_coordinates] * self.dim), indexing="ij", sparse=True))

    def radius(self) -> np.ndarray:
        r2 = sum(c**2 for c in self.coordinates())
        return np.sqrt(np.broadcast_to(r2, self.shape))

    def wavevector(self) -> list[np.ndarray]:
        return list(np.meshgrid(*([self.axis_wavenumbers] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def wavenumber_squared(self) -> np.ndarray:
        return np.broadcast_to(sum(k**2 for k in self.wavevector()), self.shape).copy()

    @cached_property
    def origin_phase(self) -> np.ndarray:
        # exp(-i xi (-L/2)) = (-1)^m on each axis
        sign = np.where(self.axis_modes % 2 == 0, 1.0, -1.0)
        grids = np.meshgrid(*([sign] * self.dim), indexing="ij", sparse=True)
        out = grids[0]
        for g in grids[1:]:
            out = out * g
        return np.broadcast_to(out, self.shape).copy()

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.abs(self.axis_modes) <= self.n_per_axis // 3
        grids = np.meshgrid(*([keep] * self.dim), indexing="ij", sparse=True)
        out = grids[0]
        for g in grids[1:]:
            out = out & g
        return np.broadcast_to(out, self.shape).copy()

    @cached_property
    def ops(self) -> "RealSpectralOps":
        return RealSpectralOps(self)


def make_grid(dim: int, n_per_axis: int, box_length: float) -> SpectralGrid:
    return SpectralGrid(dim, n_per_axis, box_length)


def _neg_index(n: int) -> np.ndarray:
    return (-np.arange(n)) % n


def _mirror(a: np.ndarray) -> np.ndarray:
    """a(-xi) on the FFT lattice."""
    for ax in range(a.ndim):
        a = np.take(a, _neg_index(a.shape[ax]), axis=ax)
    return a


def hermitian_defect(coeffs: np.ndarray) -> float:
    """max |c(xi) - conj(c(-xi))| / max |c|."""
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(coeffs - np.conj(_mirror(coeffs)))) / scale)


class Field:
    """Scalar samples on a grid with a lazily derived spectral twin.

    Instances are immutable: the stored arrays are flagged read-only and all
    operations return new fields.
    """

    __slots__ = ("grid", "_real", "_spectral")

    def __init__(self, grid: SpectralGrid, real=None, spectral=None):
        if real is None and spectral is None:
            raise ValueError("Field needs real or spectral values")
        self.grid = grid
        self._real = None if real is None else _frozen(np.asarray(real, dtype=float), grid.shape)
        self._spectral = None if spectral is None else _frozen(np.asarray(spectral, dtype=complex), grid.shape)

    @classmethod
    def from_real(cls, grid: SpectralGrid, values) -> "Field":
        return cls(grid, real=values)

    @classmethod
    def from_spectral(cls, grid: SpectralGrid, coeffs) -> "Field":
        return cls(grid, spectral=coeffs)

    @classmethod
    def from_function(cls, grid: SpectralGrid, fn) -> "Field":
        return cls(grid, real=np.broadcast_to(fn(*grid.coordinates()), grid.shape))

    @property
    def representation(self) -> dict:
        return {"real": self._real is not None, "spectral": self._spectral is not None}

    @property
    def real(self) -> np.ndarray:
        if self._real is None:
            self._real = inverse_transform(self)._real
        return self._real

    @property
    def spectral(self) -> np.ndarray:
        if self._spectral is None:
            self._spectral = forward_transform(self)._spectral
        return self._spectral

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, real=self.real + other.real)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, real=self.real - other.real)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, real=self.real * scalar)

    __rmul__ = __mul__

    def integral(self) -> float:
        return float(self.real.sum() * self.grid.cell_volume)

    def __repr__(self):
        g = self.grid
        return f"Field(dim={g.dim}, n={g.n_per_axis}, L={g.box_length}, {self.representation})"


def _frozen(a: np.ndarray, shape) -> np.ndarray:
    if a.shape != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {a.shape}")
    a = a.copy()
    a.setflags(write=False)
    return a


def forward_transform(f: Field) -> Field:
    """Populate spectral coefficients (box-mean normalization, origin-centred)."""
    if f._spectral is not None:
        return f
    g = f.grid
    coeffs = sfft.fftn(f._real, norm="forward") * g.origin_phase
    return Field(g, real=f._real, spectral=coeffs)


def inverse_transform(f: Field) -> Field:
    """Populate real samples; refuses spectra that are not Hermitian to 1e-9."""
    if f._real is not None:
        return f
    g = f.grid
    coeffs = f._spectral
    defect = hermitian_defect(coeffs)
    if defect > HERMITIAN_TOL:
        raise ValueError(f"spectrum is not Hermitian (defect {defect:.3e}); real output impossible")
    values = sfft.ifftn(coeffs * g.origin_phase, norm="forward").real
    return Field(g, real=values, spectral=coeffs)


def derivative_multiplier(grid: SpectralGrid, beta: Sequence[int]) -> np.ndarray:
    """prod_j (i xi_j)^beta_j with the Nyquist mode removed on odd axes."""
    beta = tuple(int(b) for b in beta)
    if len(beta) != grid.dim or any(b < 0 for b in beta):
        raise ValueError(f"multi-index {beta} does not match dim={grid.dim}")
    order = sum(beta)
    if order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"|beta| = {order} exceeds the configured maximum {MAX_DERIVATIVE_ORDER}")
    kmax = np.pi * grid.n_per_axis / grid.box_length
    if order and order * math.log(max(kmax, 1.0)) > math.log(np.finfo(float).max) - 10:
        raise ResolutionError(f"(max|xi|)^{order} overflows double precision")
    factors = []
    nyq = grid.n_per_axis // 2
    for b in beta:
        fac = (1j * grid.axis_wavenumbers) ** b
        if b % 2:
            fac = fac.copy()
            fac[nyq] = 0.0
        factors.append(fac)
    grids = np.meshgrid(*factors, indexing="ij", sparse=True)
    out = grids[0]
    for gg in grids[1:]:
        out = out * gg
    return np.broadcast_to(out, grid.shape)


def spectral_derivative(f: Field, beta: Sequence[int]) -> Field:
    if sum(beta) == 0:
        return f
    return Field(f.grid, spectral=f.spectral * derivative_multiplier(f.grid, beta))


def dealias(f: Field) -> Field:
    """2/3 rule: zero every coefficient with some axis |m| > n/3."""
    return Field(f.grid, spectral=np.where(f.grid.dealias_mask, f.spectral, 0.0))


def dealiased_product(a: Field, b: Field) -> Field:
    """Pointwise product of the dealiased factors, itself dealiased."""
    return dealias(Field(a.grid, real=dealias(a).real * dealias(b).real))


class RealSpectralOps:
    """Half-spectrum (rfftn) operators used in the time-stepping hot path.

    Coefficients here carry no origin phase; they are only ever multiplied
    by diagonal symbols and transformed back.
    """

    def __init__(self, grid: SpectralGrid):
        self.grid = grid
        n, d = grid.n_per_axis, grid.dim
        k_full = grid.axis_wavenumbers
        k_half = 2.0 * np.pi * np.arange(n // 2 + 1) / grid.box_length
        axes = [k_full] * (d - 1) + [k_half]
        self.kvec = np.meshgrid(*axes, indexing="ij", sparse=True)
        self.spec_shape = tuple(len(a) for a in axes)
        self.k2 = np.broadcast_to(sum(k**2 for k in self.kvec), self.spec_shape).copy()

        m_full = np.abs(grid.axis_modes)
        m_half = np.arange(n // 2 + 1)
        keep = [m_full <= n // 3] * (d - 1) + [m_half <= n // 3]
        mask = np.meshgrid(*keep, indexing="ij", sparse=True)
        out = mask[0]
        for mm in mask[1:]:
            out = out & mm
        self.dealias = np.broadcast_to(out, self.spec_shape).copy()

        # resolution-tail band: some axis |m| > n/4 (outer part of the retained block and beyond)
        inner = [m_full <= n // 4] * (d - 1) + [m_half <= n // 4]
        mask = np.meshgrid(*inner, indexing="ij", sparse=True)
        out = mask[0]
        for mm in mask[1:]:
            out = out & mm
        self.tail_band = ~np.broadcast_to(out, self.spec_shape)

        # i*xi_j with the Nyquist plane of axis j removed
        self.ikvec = []
        for j, k in enumerate(self.kvec):
            ik = 1j * k.copy()
            idx = [slice(None)] * d
            idx[j] = n // 2
            ik[tuple(idx)] = 0.0
            self.ikvec.append(ik)

        # rfft half-spectrum weights for Parseval sums (interior columns count twice)
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * d
        shape[-1] = n // 2 + 1
        self.parseval_weight = w.reshape(shape)

    def forward(self, a: np.ndarray) -> np.ndarray:
        return sfft.rfftn(a, norm="forward")

    def inverse(self, ah: np.ndarray) -> np.ndarray:
        return sfft.irfftn(ah, s=self.grid.shape, norm="forward")

    def heat(self, dt: float) -> np.ndarray:
        return np.exp(-self.k2 * dt)

    def tail_fraction(self, ah: np.ndarray) -> float:
        """Fraction of spectral energy with some axis |m| > n/4.

        The state's top third only decays (the nonlinearity is dealiased),
        so under-resolution shows up first in this outer band.
        """
        e = np.abs(ah) ** 2 * self.parseval_weight
        total = e.sum()
        if total == 0:
            return 0.0
        return float(e[self.tail_band].sum() / total)
