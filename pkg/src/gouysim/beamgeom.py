"""Analytic paraxial mode geometry.

Gaussian beam parameters, Laguerre polynomials, radial Laguerre-Gaussian and
Hermite-Gaussian fields, the Gouy phase and the Gaussian fiber eigenmode.

All lengths are SI metres.  Fields use the phase convention
``exp(+i k r^2 / 2R - i S arctan((z - z0) / z_R))``; the plane-wave carrier is
not included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import eval_hermite

# binomial-sum evaluation is used up to this order, recurrence above it
LAGUERRE_SUM_MAX_ORDER = 20


@dataclass(frozen=True)
class BeamParams:
    """Monochromatic Gaussian beam: wavelength, waist radius and focal plane."""

    wavelength: float
    w0: float
    z0: float = 0.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength!r}")
        if not self.w0 > 0:
            raise ValueError(f"waist w0 must be > 0, got {self.w0!r}")
        if not math.isfinite(self.z0):
            raise ValueError(f"focal position must be finite, got {self.z0!r}")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def z_r(self) -> float:
        return 0.5 * self.k * self.w0**2


@dataclass(frozen=True)
class LGModeSpec:
    ell: int
    p: int
    beam: BeamParams

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise ValueError(f"radial index p must be a non-negative integer, got {self.p!r}")
        if int(self.ell) != self.ell:
            raise ValueError(f"azimuthal index must be an integer, got {self.ell!r}")

    @property
    def order(self) -> int:
        """Mode order S = 2p + |l| + 1 that multiplies the Gouy phase."""
        return 2 * self.p + abs(self.ell) + 1


@dataclass(frozen=True)
class HGModeSpec:
    m: int
    n: int
    beam: BeamParams

    def __post_init__(self):
        for name, v in (("m", self.m), ("n", self.n)):
            if int(v) != v or v < 0:
                raise ValueError(f"HG index {name} must be a non-negative integer, got {v!r}")

    @property
    def order(self) -> int:
        return self.m + self.n

    @property
    def order_sq(self) -> int:
        return self.m**2 + self.n**2


@dataclass(frozen=True)
class FiberMode:
    """Gaussian single-mode fiber eigenmode with mode-field radius ``w_f``."""

    w_f: float

    def __post_init__(self):
        if not self.w_f > 0:
            raise ValueError(f"fiber mode radius must be > 0, got {self.w_f!r}")

    @classmethod
    def from_mfd(cls, mfd: float) -> "FiberMode":
        return cls(0.5 * mfd)

    @property
    def mfd(self) -> float:
        return 2.0 * self.w_f


_SPLIT = 134217729.0  # 2^27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    ca, cb = _SPLIT * a, _SPLIT * b
    ah = ca - (ca - a)
    bh = cb - (cb - b)
    al, bl = a - ah, b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@lru_cache(maxsize=64)
def _laguerre_coeffs(p):
    """Coefficients (-1)^j C(p, j) / j! as (hi, lo) double pairs."""
    out = []
    for j in range(p + 1):
        c = Fraction((-1) ** j * math.comb(p, j), math.factorial(j))
        hi = float(c)
        out.append((hi, float(c - Fraction(hi))))
    return tuple(out)


def _laguerre_sum(p, x):
    """Explicit binomial sum, evaluated by Horner's rule in double-double.

    The alternating sum cancels badly for large x; carrying the rounding
    error of every step keeps it as accurate as the recurrence.
    """
    coeffs = _laguerre_coeffs(p)
    hi = np.full_like(x, coeffs[p][0])
    lo = np.full_like(x, coeffs[p][1])
    for ch, cl in reversed(coeffs[:-1]):
        ph, pl = _two_prod(hi, x)
        pl = pl + lo * x
        sh, sl = _two_sum(ph, ch)
        sl = sl + pl + cl
        hi = sh + sl
        lo = sl - (hi - sh)
    return hi + lo


def _laguerre_recurrence(p, x):
    prev = np.ones_like(x)
    if p == 0:
        return prev
    cur = 1.0 - x
    for n in range(1, p):
        prev, cur = cur, ((2 * n + 1 - x) * cur - n * prev) / (n + 1)
    return cur


def laguerre_poly(p: int, x):
    """Laguerre polynomial L_p(x), scalar or array ``x``."""
    if int(p) != p or p < 0:
        raise ValueError(f"Laguerre order must be a non-negative integer, got {p!r}")
    p = int(p)
    xa = np.asarray(x, dtype=float)
    if p <= LAGUERRE_SUM_MAX_ORDER:
        out = _laguerre_sum(p, xa)
    else:
        out = _laguerre_recurrence(p, xa)
    return out.item() if out.ndim == 0 else out


def beam_radius(beam: BeamParams, z):
    dz = np.asarray(z, dtype=float) - beam.z0
    out = beam.w0 * np.sqrt(1.0 + (dz / beam.z_r) ** 2)
    return out.item() if out.ndim == 0 else out


def inverse_curvature(beam: BeamParams, z):
    """1/R(z); zero at the focal plane rather than singular."""
    dz = np.asarray(z, dtype=float) - beam.z0
    out = dz / (dz**2 + beam.z_r**2)
    return out.item() if out.ndim == 0 else out


def gouy_argument(beam: BeamParams, z):
    """arctan((z - z0) / z_R), the Gouy phase per unit mode order."""
    dz = np.asarray(z, dtype=float) - beam.z0
    out = np.arctan(dz / beam.z_r)
    return out.item() if out.ndim == 0 else out


def gouy_phase(mode: LGModeSpec, z):
    beam = mode.beam
    dz = np.asarray(z, dtype=float) - beam.z0
    out = -mode.order * np.arctan(2.0 * dz / (beam.k * beam.w0**2))
    return out.item() if out.ndim == 0 else out


def lg_field(mode: LGModeSpec, r, z):
    """Normalized radial LG field u_0p(r, z) in 1/m.

    Only ``ell == 0`` is supported.  Broadcasts over ``r`` and ``z``.
    """
    if mode.ell != 0:
        raise ValueError("lg_field only evaluates radial modes (ell == 0)")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radial coordinate must be >= 0")
    beam = mode.beam
    z = np.asarray(z, dtype=float)
    w = beam.w0 * np.sqrt(1.0 + ((z - beam.z0) / beam.z_r) ** 2)
    inv_r = inverse_curvature(beam, z)
    r2 = r**2
    x = 2.0 * r2 / w**2
    phase = 0.5 * beam.k * r2 * inv_r - mode.order * np.arctan((z - beam.z0) / beam.z_r)
    out = (
        math.sqrt(2.0 / math.pi)
        / w
        * np.exp(-r2 / w**2)
        * laguerre_poly(mode.p, x)
        * np.exp(1j * phase)
    )
    return out.item() if np.ndim(out) == 0 else out


def hg_field(mode: HGModeSpec, x, y, z=None):
    """Normalized HG_mn field in 1/m, evaluated at the focal plane by default.

    Off-focus evaluation uses the same phase convention as :func:`lg_field`
    with Gouy order m + n + 1.
    """
    beam = mode.beam
    z = beam.z0 if z is None else z
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = beam_radius(beam, z)
    s2 = math.sqrt(2.0)
    norm = math.sqrt(2.0 / math.pi) / w / math.sqrt(
        2.0 ** (mode.m + mode.n) * math.factorial(mode.m) * math.factorial(mode.n)
    )
    r2 = x**2 + y**2
    phase = 0.5 * beam.k * r2 * inverse_curvature(beam, z) - (mode.order + 1) * gouy_argument(beam, z)
    return (
        norm
        * eval_hermite(mode.m, s2 * x / w)
        * eval_hermite(mode.n, s2 * y / w)
        * np.exp(-r2 / w**2)
        * np.exp(1j * phase)
    )


def fiber_field(fiber: FiberMode, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radial coordinate must be >= 0")
    out = math.sqrt(2.0 / math.pi) / fiber.w_f * np.exp(-(r**2) / fiber.w_f**2)
    return out.item() if out.ndim == 0 else out
