"""Classical and N-photon N00N coupling curves along the optical axis."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .beamgeom import BeamParams, FiberMode, LGModeSpec, fiber_field, lg_field
from .coupling import overlap

DEBROGLIE_SCENARIOS = ("matched_lens_radius", "matched_rayleigh_doubled_order")


@dataclass(frozen=True)
class NoonConfig:
    N: int
    p: int
    p_prime: int
    theta: float
    beam: BeamParams
    fiber: FiberMode

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"photon number must be an integer >= 1, got {self.N!r}")
        for name in ("p", "p_prime"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
        if self.p == self.p_prime:
            raise ValueError("reference and probe radial indices must differ")

    @property
    def delta_p(self) -> int:
        return self.p_prime - self.p


@dataclass
class Curve:
    """A labelled z-series (ascending z, SI metres)."""

    label: str
    z: np.ndarray
    value: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.z.shape != self.value.shape:
            raise ValueError("z and value must have the same shape")


def _amplitudes(cfg: NoonConfig, z):
    return overlap(cfg.p, cfg.beam, cfg.fiber, z), overlap(cfg.p_prime, cfg.beam, cfg.fiber, z)


def classical_signal(cfg: NoonConfig, z):
    """|A_p - exp(-i theta) A_p'|^2; the photon number is ignored."""
    a, b = _amplitudes(cfg, z)
    return np.abs(a - np.exp(-1j * cfg.theta) * b) ** 2


def noon_signal(cfg: NoonConfig, z):
    """Probability that all N photons of the N00N state couple into the fiber."""
    a, b = _amplitudes(cfg, z)
    n = cfg.N
    return 0.5 * np.abs(a**n - np.exp(-1j * cfg.theta) * b**n) ** 2


def distinguishable_pair_signal(cfg: NoonConfig, z):
    """Coupling probability for an unbunched pair: half the bunched curve."""
    if cfg.N != 2:
        raise ValueError("distinguishable-pair baseline is defined for N == 2")
    return 0.5 * noon_signal(cfg, z)


def samepos_density(cfg: NoonConfig, x, y, z, n_photons: int | None = None):
    """Unnormalized 0.5 |u_p^n - exp(i theta) u_p'^n|^2 at transverse points."""
    n = cfg.N if n_photons is None else n_photons
    r = np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    up = lg_field(LGModeSpec(0, cfg.p, cfg.beam), r, z)
    upp = lg_field(LGModeSpec(0, cfg.p_prime, cfg.beam), r, z)
    return 0.5 * np.abs(up**n - np.exp(1j * cfg.theta) * upp**n) ** 2


def twophoton_samepos_density(cfg: NoonConfig, x, y, z):
    """Probability of finding both photons at (x, y), scaled to max 1 on the grid."""
    if cfg.N != 2:
        raise ValueError("same-position density is defined for N == 2")
    d = samepos_density(cfg, x, y, z)
    peak = np.max(d)
    return d / peak if peak > 0 else d


def radial_second_moment(cfg: NoonConfig, z, n_photons: int, r_max: float | None = None, samples: int = 20001):
    """<r^2> of the same-position density for n photons (n=1 is the intensity)."""
    if r_max is None:
        r_max = 12.0 * cfg.beam.w0 * math.hypot(1.0, (z - cfg.beam.z0) / cfg.beam.z_r) * math.sqrt(
            2 * max(cfg.p, cfg.p_prime) + 1
        )
    r = np.linspace(0.0, r_max, samples)
    d = samepos_density(cfg, r, 0.0, z, n_photons) * r
    return float(np.trapezoid(d * r**2, r) / np.trapezoid(d, r))


# -- de Broglie comparison ----------------------------------------------------


def debroglie_config(cfg: NoonConfig, scenario: str) -> NoonConfig:
    """Classical half-wavelength configuration for one of the two scenarios."""
    lam = cfg.beam.wavelength / 2.0
    if scenario == "matched_lens_radius":
        ratio, p, pp = 0.5, cfg.p, cfg.p_prime
    elif scenario == "matched_rayleigh_doubled_order":
        ratio, p, pp = 1.0 / math.sqrt(2.0), 2 * cfg.p, 2 * cfg.p_prime
    else:
        raise ValueError(f"unknown de Broglie scenario {scenario!r}; expected one of {DEBROGLIE_SCENARIOS}")
    beam = BeamParams(lam, cfg.beam.w0 * ratio, cfg.beam.z0)
    fiber = FiberMode(cfg.fiber.w_f * ratio)
    return NoonConfig(1, p, pp, cfg.theta, beam, fiber)


def debroglie_comparison(cfg: NoonConfig, scenario: str, z_grid):
    """Quantum N=2 curve and the half-wavelength classical curve for ``scenario``."""
    if cfg.N != 2:
        raise ValueError("de Broglie comparison is defined for N == 2")
    z = np.asarray(z_grid, dtype=float)
    alt = debroglie_config(cfg, scenario)
    quantum = Curve("quantum", z, noon_signal(cfg, z), {"N": 2, "wavelength_m": cfg.beam.wavelength})
    classical = Curve(
        scenario,
        z,
        classical_signal(alt, z),
        {
            "wavelength_m": alt.beam.wavelength,
            "w0_m": alt.beam.w0,
            "w_f_m": alt.fiber.w_f,
            "p": alt.p,
            "p_prime": alt.p_prime,
        },
    )
    return {"quantum": quantum, scenario: classical}


# -- fringe analysis ------------------------------------------------------------


def _pair_amplitudes(cfg: NoonConfig, z, n_photons):
    a, b = _amplitudes(cfg, z)
    return a**n_photons, b**n_photons


def fringe_phase(cfg: NoonConfig, z, n_photons: int | None = None):
    """Unwrapped argument psi(z) of the interference term.

    The signal is |a|^2 + |b|^2 - 2 |a||b| cos(psi) with a = A_p^n,
    b = A_p'^n and psi = arg(a conj(b)) + theta.  ``z`` must be ascending
    and dense enough that psi moves by less than pi per step.
    """
    n = cfg.N if n_photons is None else n_photons
    a, b = _pair_amplitudes(cfg, z, n)
    return np.unwrap(np.angle(a * np.conj(b))) + cfg.theta


def fringe_envelope(cfg: NoonConfig, z, n_photons: int | None = None):
    """Amplitude 2 |a||b| of the oscillatory term (before the 1/2 of the N00N form)."""
    n = cfg.N if n_photons is None else n_photons
    a, b = _pair_amplitudes(cfg, z, n)
    return 2.0 * np.abs(a) * np.abs(b)


def oscillatory_part(cfg: NoonConfig, z, n_photons: int | None = None):
    """-cos(psi): the interference term with its envelope divided out."""
    return -np.cos(fringe_phase(cfg, z, n_photons))


def count_fringe_crossings(values) -> int:
    """Sign changes of a mean-free oscillatory series (exact zeros skipped)."""
    s = np.sign(np.asarray(values, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def fringe_levels(cfg: NoonConfig, z, level_offset: float, n_photons: int | None = None):
    """z positions where psi(z) = level_offset + k pi, refined by root finding.

    ``level_offset = 0`` gives the fringe extrema, ``pi/2`` the zero
    crossings of the oscillatory term.
    """
    n = cfg.N if n_photons is None else n_photons
    z = np.asarray(z, dtype=float)
    psi = fringe_phase(cfg, z, n)
    shifted = (psi - level_offset) / math.pi
    ks = np.floor(shifted)
    idx = np.nonzero(ks[1:] != ks[:-1])[0]
    out = []
    for i in idx:
        target = level_offset + math.pi * max(ks[i], ks[i + 1])
        ref = psi[i]

        def g(zz, ref=ref, target=target):
            a, b = _pair_amplitudes(cfg, zz, n)
            local = ref + (np.angle(a * np.conj(b)) + cfg.theta - ref + math.pi) % (2 * math.pi) - math.pi
            return local - target

        out.append(brentq(g, z[i], z[i + 1], xtol=1e-15, rtol=1e-14))
    return np.array(out)


# -- brute-force oracle ---------------------------------------------------------


def bruteforce_noon_signal(cfg: NoonConfig, z_grid, n: int = 512, window: float | None = None):
    """N-photon coupling probability by grid propagation (test oracle only).

    The N00N state is a sum of product states, so propagating it means
    propagating each single-photon factor with the angular spectrum method;
    projecting every photon onto the sampled fiber mode then factorizes
    into products of discrete overlaps.
    """
    from .propagation import asm_propagate, default_window, sample_mode

    modes = [LGModeSpec(0, cfg.p, cfg.beam), LGModeSpec(0, cfg.p_prime, cfg.beam)]
    z_grid = np.asarray(z_grid, dtype=float)
    if window is None:
        window = default_window(modes, tuple(z_grid))
    # two-photon terms: (coefficient, single-photon field per photon)
    start = [sample_mode(m, n, window) for m in modes]
    coeffs = [1.0 / math.sqrt(2.0), -np.exp(1j * cfg.theta) / math.sqrt(2.0)]
    fib = None
    out = []
    for z in z_grid:
        fields = [asm_propagate(f, z - cfg.beam.z0, check=False) for f in start]
        if fib is None:
            xx, yy = fields[0].mesh()
            fib = fields[0].__class__(
                fiber_field(cfg.fiber, np.hypot(xx, yy)), fields[0].dx, fields[0].dy, fields[0].k
            )
        amp = sum(c * fib.overlap(f) ** cfg.N for c, f in zip(coeffs, fields))
        out.append(abs(amp) ** 2)
    return np.array(out)


def with_theta(cfg: NoonConfig, theta: float) -> NoonConfig:
    return replace(cfg, theta=theta)


# -- export ---------------------------------------------------------------------

CONFIG_TAG = "gouysim-config:"


def canonical_json(config) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _write_table(stream, header, columns, config):
    if config is not None:
        stream.write(f"# {CONFIG_TAG} {canonical_json(config)}\n")
    stream.write(header + "\n")
    for row in zip(*columns):
        stream.write(",".join(repr(float(v)) for v in row) + "\n")


def write_curve_csv(stream, curve: Curve, config=None):
    """Write ``z_m,value`` rows (ascending z, round-trip float precision)."""
    order = np.argsort(curve.z, kind="stable")
    _write_table(stream, "z_m,value", (curve.z[order], curve.value[order]), config)


def write_density_csv(stream, x, y, values, config=None):
    """Write ``x_m,y_m,value`` rows for a sampled transverse density."""
    x, y, v = (np.asarray(a, dtype=float).ravel() for a in (x, y, values))
    _write_table(stream, "x_m,y_m,value", (x, y, v), config)
