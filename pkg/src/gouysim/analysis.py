"""Focal-scan data pipeline: ingestion, corrections and four-parameter fits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamgeom import BeamParams, FiberMode
from .interference import CONFIG_TAG, NoonConfig, classical_signal, noon_signal
from .leastsq import levenberg_marquardt

DEFAULT_TAU = 1e-9
DEFAULT_STEP = 20e-9
NOMINAL_W0 = 25e-6
DEFAULT_WAVELENGTH = 810e-9
PARAM_NAMES = ("scale", "w0", "z0", "theta")


class ParseError(ValueError):
    """Malformed scan or raw-counts input."""


class FitError(RuntimeError):
    """Fit did not converge or the Jacobian was rank deficient.

    The best parameters found are attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class ScanCurve:
    z: np.ndarray
    signal: np.ndarray
    sigma: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.z.ndim != 1 or self.z.shape != self.signal.shape:
            raise ValueError("z and signal must be 1D arrays of equal length")
        if np.any(np.diff(self.z) <= 0):
            raise ValueError("z must be strictly increasing")
        if np.any(self.signal < 0):
            raise ValueError("signal must be non-negative")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.z.shape:
                raise ValueError("sigma must match z")
            if np.any(self.sigma < 0):
                raise ValueError("sigma must be non-negative")

    def __len__(self):
        return self.z.size


@dataclass
class FitResult:
    scale: float
    w0: float
    z0: float
    theta: float
    adjusted_r2: float
    residual_norm: float
    covariance: np.ndarray
    converged: bool = True
    iterations: int = 0
    message: str = ""
    weighting: str = "unweighted"
    model: str = "classical"
    cost_history: list = field(default_factory=list, repr=False)

    @property
    def params(self):
        return np.array([self.scale, self.w0, self.z0, self.theta])

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "w0_m": self.w0,
            "z0_m": self.z0,
            "theta_rad": self.theta,
            "adjusted_r2": self.adjusted_r2,
            "residual_norm": self.residual_norm,
            "covariance": np.asarray(self.covariance).tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
            "weighting": self.weighting,
            "model": self.model,
        }


# -- corrections ----------------------------------------------------------------


def accidental_correct(coincidences, singles_1, singles_2, tau=DEFAULT_TAU):
    """Subtract accidental coincidences R1 * R2 * tau.

    Returns ``(corrected, clamped)``; values that would go negative are set to
    zero and flagged.  Works elementwise on arrays.
    """
    c, s1, s2 = (np.asarray(v, dtype=float) for v in (coincidences, singles_1, singles_2))
    if np.any(c < 0) or np.any(s1 < 0) or np.any(s2 < 0) or tau < 0:
        raise ValueError("counts, rates and coincidence window must be non-negative")
    corrected = c - s1 * s2 * tau
    clamped = corrected < 0
    corrected = np.where(clamped, 0.0, corrected)
    if corrected.ndim == 0:
        return float(corrected), bool(clamped)
    return corrected, clamped


def steps_to_position(steps, step_size=DEFAULT_STEP):
    out = np.asarray(steps) * step_size
    return out.item() if np.ndim(out) == 0 else out


def adjusted_r2(residuals, signals, n_params: int = 4) -> float:
    r = np.asarray(residuals, dtype=float)
    y = np.asarray(signals, dtype=float)
    n = y.size
    if n <= n_params + 1:
        raise ValueError(f"need more than {n_params + 1} points for adjusted R^2, got {n}")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("signal has zero variance; R^2 undefined")
    r2 = 1.0 - float(r @ r) / ss_tot
    return 1.0 - (1.0 - r2) * (n - 1) / (n - n_params - 1)


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    t = math.remainder(theta, 2.0 * math.pi)
    return math.pi if t == -math.pi else t


# -- model and fit --------------------------------------------------------------


def scan_model(z, w0, z0, theta, *, model, n_photons, p, p_prime, fiber, wavelength):
    cfg = NoonConfig(n_photons, p, p_prime, theta, BeamParams(wavelength, w0, z0), fiber)
    if model == "classical":
        return classical_signal(cfg, z)
    if model == "noon":
        return noon_signal(cfg, z)
    raise ValueError(f"unknown model {model!r}")


def _moving_average(y, width=5):
    kernel = np.ones(width) / width
    pad = width // 2
    return np.convolve(np.pad(y, pad, mode="edge"), kernel, mode="valid")


def fit_weights(curve: ScanCurve, weighting: str):
    """Per-point weights and the label recorded in the result."""
    if weighting == "none" or (weighting == "auto" and curve.sigma is None):
        return np.ones(len(curve)), "unweighted"
    if weighting == "poisson":
        return 1.0 / np.maximum(curve.signal, 1.0), "poisson"
    if weighting in ("auto", "sigma"):
        if curve.sigma is None:
            raise ValueError("sigma weighting requested but the scan has no sigma column")
        s = curve.sigma
        w = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0) ** 2, 1.0)
        return w, "sigma" if np.any(s > 0) else "unweighted"
    raise ValueError(f"unknown weighting {weighting!r}")


def fit_scan(
    curve: ScanCurve,
    model: str = "classical",
    modes=(0, 4),
    fiber: FiberMode | None = None,
    init: FitResult | None = None,
    *,
    n_photons: int = 2,
    wavelength: float | None = None,
    weighting: str = "auto",
    max_iter: int = 500,
    nominal_w0: float = NOMINAL_W0,
) -> FitResult:
    """Fit ``scale * model(z; w0, z0, theta)`` with the fiber mode held fixed.

    ``model`` is ``"classical"`` or ``"noon"`` (with ``n_photons``).  Raises
    :class:`FitError` on non-convergence or a rank-deficient Jacobian.
    """
    if len(curve) < 8:
        raise ValueError("need at least 8 scan points")
    if model not in ("classical", "noon"):
        raise ValueError(f"unknown model {model!r}")
    fiber = fiber or FiberMode.from_mfd(5e-6)
    wavelength = wavelength or curve.meta.get("wavelength_m", DEFAULT_WAVELENGTH)
    p, p_prime = modes
    n_ph = n_photons if model == "noon" else 1
    z, y = curve.z, curve.signal
    weights, wlabel = fit_weights(curve, weighting)
    sqrt_w = np.sqrt(weights)

    def shape(w0, z0, theta):
        return scan_model(
            z, w0, z0, theta, model=model, n_photons=n_ph, p=p, p_prime=p_prime, fiber=fiber, wavelength=wavelength
        )

    def best_scale(m):
        den = float(np.sum(weights * m * m))
        return float(np.sum(weights * m * y)) / den if den > 0 else 1.0

    if init is None:
        smooth = _moving_average(y)
        z_peak = float(z[np.argmax(smooth)])
        z_centroid = float(np.sum(z * y) / np.sum(y)) if np.sum(y) > 0 else z_peak
        best = None
        for z0 in (z_peak, z_centroid):
            for th in (0.0, math.pi / 2, -math.pi / 2, math.pi):
                m = shape(nominal_w0, z0, th)
                sc = best_scale(m)
                c = float(np.sum(weights * (y - sc * m) ** 2))
                if best is None or c < best[0]:
                    best = (c, sc, nominal_w0, z0, th)
        _, sc0, w00, z00, th0 = best
    else:
        sc0, w00, z00, th0 = init.scale, init.w0, init.z0, init.theta

    # O(1) internal parameters
    s_ref = abs(sc0) if sc0 else 1.0
    w_ref = w00
    z_ref = BeamParams(wavelength, w_ref).z_r

    def unpack(x):
        return abs(x[0]) * s_ref, abs(x[1]) * w_ref, x[2] * z_ref, x[3]

    def residuals(x):
        sc, w0, z0, th = unpack(x)
        return sqrt_w * (y - sc * shape(w0, z0, th))

    x0 = np.array([sc0 / s_ref, w00 / w_ref, z00 / z_ref, th0])
    lm = levenberg_marquardt(residuals, x0, max_iter=max_iter)
    sc, w0, z0, th = unpack(lm.x)
    raw_res = y - sc * shape(w0, z0, th)

    # Jacobian in physical units: d r / d p = d r / d x * d x / d p
    jac_phys = lm.jac / np.array([s_ref * np.sign(lm.x[0] or 1.0), w_ref * np.sign(lm.x[1] or 1.0), z_ref, 1.0])
    dof = max(len(curve) - 4, 1)
    message = lm.message
    cov = np.full((4, 4), np.nan)
    rank_ok = lm.rank == 4
    if rank_ok:
        cov = np.linalg.inv(jac_phys.T @ jac_phys)
        if wlabel == "unweighted":
            cov *= 2.0 * lm.cost / dof
    else:
        message = f"rank-deficient Jacobian (rank {lm.rank} of 4)"
    try:
        r2 = adjusted_r2(raw_res, y, 4)
    except ValueError:
        r2 = math.nan
    result = FitResult(
        scale=sc,
        w0=w0,
        z0=z0,
        theta=wrap_angle(th),
        adjusted_r2=r2,
        residual_norm=math.sqrt(2.0 * lm.cost),
        covariance=cov,
        converged=lm.converged and rank_ok,
        iterations=lm.iterations,
        message=message,
        weighting=wlabel,
        model=model if model == "classical" else f"noon(N={n_ph})",
        cost_history=lm.cost_history,
    )
    if not result.converged:
        raise FitError(message, result)
    return result


# -- file formats ---------------------------------------------------------------


def _split_comments(text):
    comments, body = [], []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        (comments if s.startswith("#") else body).append(line)
    return comments, body


def _config_from_comments(comments):
    for c in comments:
        c = c.lstrip("#").strip()
        if c.startswith(CONFIG_TAG):
            try:
                return json.loads(c[len(CONFIG_TAG) :])
            except json.JSONDecodeError:
                return None
    return None


def _read_table(path, required, optional=(), aliases=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: cannot read ({exc})") from exc
    comments, body = _split_comments(text)
    if not body:
        raise ParseError(f"{path}: no header line")
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    header = [h.strip() for h in rows[0]]
    aliases = aliases or {}
    header = [aliases.get(h, h) for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"{path}: header {header} lacks column(s) {missing}")
    cols = {name: [] for name in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: data row {lineno} has {len(row)} fields, expected {len(header)}")
        for name, v in zip(header, row):
            try:
                cols[name].append(float(v))
            except ValueError as exc:
                raise ParseError(f"{path}: data row {lineno}: {v!r} is not a number") from exc
    out = {name: np.array(vals) for name, vals in cols.items() if name in (*required, *optional)}
    return out, _config_from_comments(comments)


def read_scan_csv(path) -> ScanCurve:
    """Read ``z_m,signal[,sigma]``; a ``value`` column is accepted for ``signal``."""
    cols, config = _read_table(path, ("z_m", "signal"), ("sigma",), aliases={"value": "signal"})
    meta = {"source": str(path), "has_sigma": "sigma" in cols}
    if config:
        meta["config"] = config
    order = np.argsort(cols["z_m"], kind="stable")
    try:
        return ScanCurve(
            cols["z_m"][order],
            cols["signal"][order],
            cols["sigma"][order] if "sigma" in cols else None,
            meta,
        )
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def raw_counts_to_scan(steps, coincidences, singles1, singles2, tau=DEFAULT_TAU, step_size=DEFAULT_STEP, meta=None):
    z = steps_to_position(np.asarray(steps, dtype=float), step_size)
    corrected, clamped = accidental_correct(coincidences, singles1, singles2, tau)
    corrected, clamped = np.atleast_1d(corrected), np.atleast_1d(clamped)
    order = np.argsort(z, kind="stable")
    meta = dict(meta or {})
    meta.update({"tau_s": tau, "step_size_m": step_size, "clamped": clamped[order].tolist(), "has_sigma": False})
    return ScanCurve(np.atleast_1d(z)[order], corrected[order], None, meta)


def read_raw_counts_csv(path, tau=DEFAULT_TAU, step_size=DEFAULT_STEP) -> ScanCurve:
    """Read ``steps,coincidences,singles1,singles2`` (rates) into a corrected scan."""
    cols, config = _read_table(path, ("steps", "coincidences", "singles1", "singles2"))
    meta = {"source": str(path)}
    if config:
        meta["config"] = config
    try:
        return raw_counts_to_scan(
            cols["steps"], cols["coincidences"], cols["singles1"], cols["singles2"], tau, step_size, meta
        )
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
