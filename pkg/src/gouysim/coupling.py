"""Overlap amplitudes between radial LG modes and a Gaussian fiber mode.

``A_p(z) = integral conj(u_0p(r, z)) u_SMF(r) d^2 r`` is evaluated two ways:
a closed form (used everywhere downstream) and adaptive radial quadrature
(kept as the independent check).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from .beamgeom import (
    BeamParams,
    FiberMode,
    LGModeSpec,
    beam_radius,
    fiber_field,
    inverse_curvature,
    lg_field,
)

NUMERIC_ABS_TOL = 1e-9


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class OverlapConfig:
    mode: LGModeSpec
    fiber: FiberMode
    z: float

    def __post_init__(self):
        if self.mode.ell != 0:
            raise ValueError("overlaps are defined for radial modes only (ell == 0)")


def _kahan_sum(terms):
    total = np.zeros_like(terms[0])
    comp = np.zeros_like(terms[0])
    for t in terms:
        y = t - comp
        s = total + y
        comp = (s - total) - y
        total = s
    return total


def overlap_c(beam: BeamParams, fiber: FiberMode, z):
    """The Gaussian exponent C(z) of the closed form; Re(C) > 0 always."""
    w = np.asarray(beam_radius(beam, z))
    inv_r = np.asarray(inverse_curvature(beam, z))
    return 0.5 * w**2 * (1.0 / fiber.w_f**2 + 1.0 / w**2 + 0.5j * beam.k * inv_r)


def overlap_analytic(cfg: OverlapConfig):
    """Closed-form A_p(z).  ``cfg.z`` may be an array."""
    mode, fiber = cfg.mode, cfg.fiber
    if mode.ell != 0:
        raise ValueError("overlaps are defined for radial modes only (ell == 0)")
    beam, p = mode.beam, mode.p
    z = np.asarray(cfg.z, dtype=float)
    w = np.asarray(beam_radius(beam, z))
    big_b = (w / fiber.w_f) * np.exp(1j * (2 * p + 1) * np.arctan((z - beam.z0) / beam.z_r))
    c = overlap_c(beam, fiber, z).astype(complex)
    inv_c = 1.0 / c
    terms = []
    power = inv_c
    for j in range(p + 1):
        terms.append(math.comb(p, j) * (-1) ** j * power)
        power = power * inv_c
    out = big_b * _kahan_sum(terms)
    return out.item() if out.ndim == 0 else out


def overlap(p: int, beam: BeamParams, fiber: FiberMode, z):
    """Shorthand for the closed form of radial mode ``p``; vectorized in ``z``."""
    return overlap_analytic(OverlapConfig(LGModeSpec(0, p, beam), fiber, z))


def overlap_numeric(cfg: OverlapConfig, epsabs: float = NUMERIC_ABS_TOL):
    """A_p(z) by adaptive quadrature of the radial overlap integral.

    The radius is rescaled per plane, r = s / d(z) with
    d = sqrt(1/w_f^2 + 1/w(z)^2), so every z shares the interval
    s in [0, s_max] and one adaptive vector quadrature covers a whole sweep.
    """
    mode, fiber = cfg.mode, cfg.fiber
    if mode.ell != 0:
        raise ValueError("overlaps are defined for radial modes only (ell == 0)")
    z = np.asarray(cfg.z, dtype=float)
    zf = np.atleast_1d(z).ravel()
    w = np.asarray(beam_radius(mode.beam, zf))
    decay = np.sqrt(1.0 / fiber.w_f**2 + 1.0 / w**2)
    s_max = 12.0 + 2.0 * math.sqrt(mode.p)

    def integrand(s):
        r = s / decay
        return 2.0 * math.pi * r / decay * np.conj(lg_field(mode, r, zf)) * fiber_field(fiber, r)

    val, err = quad_vec(integrand, 0.0, s_max, epsabs=epsabs * 1e-3, epsrel=1e-13, norm="max", limit=2000)
    if not err <= epsabs:
        raise QuadratureError(f"overlap quadrature did not converge (error estimate {err:.2e})")
    val = np.asarray(val, dtype=complex)
    return complex(val[0]) if z.ndim == 0 else val.reshape(z.shape)
