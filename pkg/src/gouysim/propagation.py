"""Sampled fields and angular spectrum propagation.

A :class:`SampledField` holds the slowly varying envelope of a monochromatic
scalar field on a uniform grid.  The plane-wave carrier ``exp(i k z)`` is not
folded into the samples; its accumulated phase is kept in ``carrier_phase``.

The transverse transform is the unitary one,

    F(kx, ky) = 1/(2 pi) * integral u(x, y) exp(-i (kx x + ky y)) dx dy,

so that ``sum |u|^2 dx dy == sum |F|^2 dkx dky`` on the discrete grids.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.polynomial.laguerre import laggauss

from .beamgeom import BeamParams, HGModeSpec, LGModeSpec, hg_field, laguerre_poly, lg_field

MIN_GRID = 64
# evanescent energy above this fraction is an error, not a mask
EVANESCENT_TOL = 1e-6
NORM_TOL = 1e-9
# beam radius (second-moment, 1/e^2 equivalent) per grid pitch / per window
RESOLVE_SAMPLES = 8
WINDOW_FACTOR = 8


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_grid(shape):
    if len(shape) != 2:
        raise ValueError(f"field must be 2D, got shape {shape}")
    for n in shape:
        if not _is_pow2(n) or n < MIN_GRID:
            raise ValueError(f"grid dimensions must be powers of two >= {MIN_GRID}, got {shape}")


def _readonly(a):
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampledField:
    values: np.ndarray
    dx: float
    dy: float
    k: float
    z: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    carrier_phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        _check_grid(self.values.shape)
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid pitch must be positive")
        n = self.norm()
        if not (math.isfinite(n) and n > 0):
            raise ValueError(f"field norm must be finite and > 0, got {n}")

    @property
    def shape(self):
        return self.values.shape

    def coords(self):
        """1D x and y sample coordinates (axis 0 is x, axis 1 is y)."""
        nx, ny = self.shape
        x = (np.arange(nx) - nx // 2) * self.dx + self.center[0]
        y = (np.arange(ny) - ny // 2) * self.dy + self.center[1]
        return x, y

    def mesh(self):
        x, y = self.coords()
        return np.meshgrid(x, y, indexing="ij")

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dx * self.dy)

    def normalized(self) -> "SampledField":
        return replace(self, values=self.values / math.sqrt(self.norm()))

    def overlap(self, other: "SampledField") -> complex:
        """Discrete inner product  sum conj(self) * other dx dy."""
        if other.shape != self.shape:
            raise ValueError("fields live on different grids")
        return complex(np.sum(np.conj(self.values) * other.values) * self.dx * self.dy)

    def second_moment_radius(self) -> float:
        """2 * sqrt(<x^2>) averaged over both axes; equals w for a Gaussian."""
        xx, yy = self.mesh()
        i = np.abs(self.values) ** 2
        tot = i.sum()
        mx = (i * xx).sum() / tot
        my = (i * yy).sum() / tot
        var = 0.5 * ((i * (xx - mx) ** 2).sum() + (i * (yy - my) ** 2).sum()) / tot
        return 2.0 * math.sqrt(var)


@dataclass(frozen=True)
class AngularSpectrum:
    values: np.ndarray
    dkx: float
    dky: float
    k: float
    z: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    carrier_phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        _check_grid(self.values.shape)

    @property
    def shape(self):
        return self.values.shape

    def coords(self):
        nx, ny = self.shape
        kx = (np.arange(nx) - nx // 2) * self.dkx
        ky = (np.arange(ny) - ny // 2) * self.dky
        return kx, ky

    def kappa_sq(self):
        kx, ky = self.coords()
        return kx[:, None] ** 2 + ky[None, :] ** 2

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dkx * self.dky)


def _center_phase(kx, ky, center):
    cx, cy = center
    if cx == 0 and cy == 0:
        return None
    return np.exp(-1j * (kx[:, None] * cx + ky[None, :] * cy))


def to_angular_spectrum(f: SampledField) -> AngularSpectrum:
    _check_grid(f.shape)
    nx, ny = f.shape
    dkx = 2.0 * math.pi / (nx * f.dx)
    dky = 2.0 * math.pi / (ny * f.dy)
    spec = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(f.values)))
    spec *= f.dx * f.dy / (2.0 * math.pi)
    kx = (np.arange(nx) - nx // 2) * dkx
    ky = (np.arange(ny) - ny // 2) * dky
    ph = _center_phase(kx, ky, f.center)
    if ph is not None:
        spec *= ph
    return AngularSpectrum(spec, dkx, dky, f.k, z=f.z, center=f.center, carrier_phase=f.carrier_phase)


def from_angular_spectrum(s: AngularSpectrum) -> SampledField:
    nx, ny = s.shape
    dx = 2.0 * math.pi / (nx * s.dkx)
    dy = 2.0 * math.pi / (ny * s.dky)
    vals = s.values
    kx, ky = s.coords()
    ph = _center_phase(kx, ky, s.center)
    if ph is not None:
        vals = vals * np.conj(ph)
    u = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(vals)))
    u *= 2.0 * math.pi / (dx * dy)
    return SampledField(u, dx, dy, s.k, z=s.z, center=s.center, carrier_phase=s.carrier_phase)


def kz(kappa_sq, k: float, model: str = "paraxial"):
    """Longitudinal wavevector for transverse wavevector magnitude squared."""
    kappa_sq = np.asarray(kappa_sq, dtype=float)
    if model == "paraxial":
        out = k - kappa_sq / (2.0 * k)
    elif model == "exact":
        if np.any(kappa_sq > k**2):
            raise ValueError("kappa^2 > k^2: evanescent component in exact model (mask it or use paraxial)")
        out = np.sqrt(k**2 - kappa_sq)
    else:
        raise ValueError(f"unknown k_z model {model!r}")
    return out.item() if out.ndim == 0 else out


def _kz_offset(kappa_sq, k, model):
    """k_z - k, evaluated without cancellation; NaN where evanescent."""
    if model == "paraxial":
        return -kappa_sq / (2.0 * k)
    if model == "exact":
        with np.errstate(invalid="ignore"):
            root = np.sqrt(k**2 - kappa_sq)
            return np.where(kappa_sq <= k**2, -kappa_sq / (k + root), np.nan)
    raise ValueError(f"unknown k_z model {model!r}")


def check_resolution(f: SampledField) -> bool:
    """Warn and return False when the grid under-resolves or clips the field."""
    w = f.second_moment_radius()
    nx, ny = f.shape
    window = min(nx * f.dx, ny * f.dy)
    pitch = max(f.dx, f.dy)
    # small slack: a window of exactly 8 radii must not warn over sampling error
    ok = w >= RESOLVE_SAMPLES * pitch and window >= WINDOW_FACTOR * w * (1 - 1e-3)
    if not ok:
        warnings.warn(
            f"grid may not resolve field: radius {w:.3e} m, pitch {pitch:.3e} m, window {window:.3e} m",
            RuntimeWarning,
            stacklevel=3,
        )
    return ok


def asm_propagate(f: SampledField, dz: float, model: str = "paraxial", check: bool = True) -> SampledField:
    """Propagate a sampled field by ``dz`` with the angular spectrum method.

    Each plane wave picks up ``exp(+i (k_z - k) dz)``; the carrier term
    ``k dz`` is added to ``carrier_phase``.  In the exact model evanescent
    components are zeroed, and a ValueError is raised if they carried more
    than 1e-6 of the energy.
    """
    if dz == 0:
        return f
    if check:
        check_resolution(f)
    spec = to_angular_spectrum(f)
    offset = _kz_offset(spec.kappa_sq(), f.k, model)
    vals = spec.values
    if model == "exact":
        evanescent = np.isnan(offset)
        if evanescent.any():
            lost = float(np.sum(np.abs(vals[evanescent]) ** 2) * spec.dkx * spec.dky) / spec.norm()
            if lost > EVANESCENT_TOL:
                raise ValueError(f"evanescent mask would discard {lost:.3e} of the field energy")
            offset = np.where(evanescent, 0.0, offset)
            vals = np.where(evanescent, 0.0, vals)
    vals = vals * np.exp(1j * offset * dz)
    out = from_angular_spectrum(replace(spec, values=vals))
    out = replace(out, z=f.z + dz, carrier_phase=f.carrier_phase + f.k * dz)
    if check:
        check_resolution(out)
    return out


class KzMoments(NamedTuple):
    mean: float
    second_moment: float
    variance: float
    # <k_z> - k, kept separately because it carries the digits that matter
    mean_offset: float


def _moments_from_offsets(offset, weights, k):
    mean_off = float(np.sum(offset * weights))
    var = float(np.sum((offset - mean_off) ** 2 * weights))
    mean = k + mean_off
    return KzMoments(mean, mean**2 + var, var, mean_off)


def kz_moments(spectrum: AngularSpectrum, model: str = "paraxial") -> KzMoments:
    """<k_z>, <k_z^2> and the variance over a unit-norm angular spectrum.

    Moments are accumulated relative to ``k`` so the variance does not
    suffer from cancellation against ``k^2``.
    """
    norm = spectrum.norm()
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"spectrum must be normalized, discrete norm is {norm!r}")
    weights = np.abs(spectrum.values) ** 2 * spectrum.dkx * spectrum.dky
    offset = _kz_offset(spectrum.kappa_sq(), spectrum.k, model)
    if model == "exact":
        bad = np.isnan(offset)
        if weights[bad].sum() > EVANESCENT_TOL:
            raise ValueError("spectrum has non-negligible evanescent content")
        offset = np.where(bad, 0.0, offset)
        weights = np.where(bad, 0.0, weights)
    return _moments_from_offsets(offset, weights, spectrum.k)


def kz_moments_radial(mode: LGModeSpec, model: str = "paraxial", nodes: int | None = None) -> KzMoments:
    """Fast path for radial LG modes: 1D Gauss-Laguerre quadrature.

    The angular spectrum of u_0p is again an LG_0p profile of waist 2/w0;
    with x = 2 kappa^2 / (2/w0)^2 the weight is exp(-x) L_p(x)^2.
    """
    if mode.ell != 0:
        raise ValueError("radial fast path requires ell == 0")
    beam = mode.beam
    if nodes is None:
        nodes = mode.p + 3 if model == "paraxial" else 80
    x, wts = laggauss(nodes)
    big_w = 2.0 / beam.w0
    kappa_sq = 0.5 * big_w**2 * x
    weights = wts * laguerre_poly(mode.p, x) ** 2
    offset = _kz_offset(kappa_sq, beam.k, model)
    if model == "exact" and np.isnan(offset).any():
        raise ValueError("radial quadrature reached evanescent region")
    return _moments_from_offsets(offset, weights / weights.sum(), beam.k)


# -- sampling helpers -------------------------------------------------------


def grid_coords(n: int, window: float, center: float = 0.0):
    dx = window / n
    return (np.arange(n) - n // 2) * dx + center, dx


def mode_radius(mode, z=None) -> float:
    """Second-moment (1/e^2-equivalent) radius of an LG/HG mode at plane ``z``.

    Equals sqrt(S) * w(z) with S the Gouy order, so w(z) for the Gaussian.
    """
    beam: BeamParams = mode.beam
    z = beam.z0 if z is None else z
    w = beam.w0 * math.hypot(1.0, (z - beam.z0) / beam.z_r)
    if isinstance(mode, LGModeSpec):
        s = mode.order
    elif isinstance(mode, HGModeSpec):
        s = mode.order + 1
    else:
        raise TypeError(f"unknown mode type {type(mode).__name__}")
    return math.sqrt(s) * w


def default_window(modes, z_planes=()) -> float:
    """Window = 8x the largest mode radius over the given planes (focus included)."""
    if not isinstance(modes, (list, tuple)):
        modes = [modes]
    radii = [mode_radius(m, z) for m in modes for z in (m.beam.z0, *z_planes)]
    return WINDOW_FACTOR * max(radii)


def sample_mode(mode, n: int = 1024, window: float | None = None, z: float | None = None) -> SampledField:
    """Sample an LG (ell=0) or HG mode on an n x n grid centred on the axis."""
    beam: BeamParams = mode.beam
    z = beam.z0 if z is None else z
    if window is None:
        window = default_window(mode, (z,))
    xs, dx = grid_coords(n, window)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    if isinstance(mode, LGModeSpec):
        vals = lg_field(mode, np.hypot(xx, yy), z)
    elif isinstance(mode, HGModeSpec):
        vals = hg_field(mode, xx, yy, z)
    else:
        raise TypeError(f"cannot sample {type(mode).__name__}")
    return SampledField(vals, dx, dx, beam.k, z=z)


def sample_function(fn, n: int, window: float, k: float, z: float = 0.0) -> SampledField:
    xs, dx = grid_coords(n, window)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    return SampledField(fn(xx, yy), dx, dx, k, z=z)


# -- field dump -------------------------------------------------------------


def field_metadata(f: SampledField) -> dict:
    nx, ny = f.shape
    return {
        "nx": nx,
        "ny": ny,
        "dx_m": f.dx,
        "dy_m": f.dy,
        "center_m": list(f.center),
        "z_m": f.z,
        "k_per_m": f.k,
        "wavelength_m": 2.0 * math.pi / f.k,
        "carrier_phase_rad": f.carrier_phase,
        "norm": f.norm(),
        "columns": ["x_m", "y_m", "re", "im"],
    }


def dump_field(f: SampledField, csv_path, header_lines=(), extra_meta=None):
    """Write ``x_m,y_m,re,im`` rows plus a ``<csv>.json`` metadata sidecar."""
    csv_path = Path(csv_path)
    xx, yy = f.mesh()
    rows = np.column_stack([xx.ravel(), yy.ravel(), f.values.real.ravel(), f.values.imag.ravel()])
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("x_m,y_m,re,im\n")
        np.savetxt(fh, rows, fmt="%.17g", delimiter=",")
    meta = field_metadata(f)
    if extra_meta:
        meta.update(extra_meta)
    sidecar = csv_path.with_name(csv_path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sidecar


def _header_rows(path):
    n = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            n += 1
            if line.startswith("x_m"):
                return n
    raise ValueError(f"{path}: missing x_m,y_m,re,im header")


def load_field(csv_path) -> SampledField:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_name(csv_path.name + ".json").read_text(encoding="utf-8"))
    body = np.loadtxt(csv_path, delimiter=",", comments="#", skiprows=_header_rows(csv_path))
    vals = (body[:, 2] + 1j * body[:, 3]).reshape(meta["nx"], meta["ny"])
    return SampledField(
        vals,
        meta["dx_m"],
        meta["dy_m"],
        meta["k_per_m"],
        z=meta["z_m"],
        center=tuple(meta["center_m"]),
        carrier_phase=meta["carrier_phase_rad"],
    )
