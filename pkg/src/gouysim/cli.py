"""Command-line front end: ``gouysim {simulate,fit,qfi,propagate}``.

Boundary units are nm (wavelength), um (waists, MFD, windows) and mm (z);
everything is SI internally.  Exit codes: 0 success, 2 configuration,
3 input parse, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import FitError, ParseError, fit_scan, read_raw_counts_csv, read_scan_csv
from .beamgeom import BeamParams, FiberMode, HGModeSpec, LGModeSpec
from .coupling import overlap
from .interference import (
    CONFIG_TAG,
    Curve,
    NoonConfig,
    canonical_json,
    classical_signal,
    debroglie_comparison,
    distinguishable_pair_signal,
    noon_signal,
    samepos_density,
    write_curve_csv,
    write_density_csv,
)
from .metrology import cfi_curve, cfi_focus, heisenberg_term_lg, p_max_from_overlaps, qfi_noon_lg
from .propagation import MIN_GRID, asm_propagate, check_resolution, default_window, dump_field, sample_mode

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3, 4
SWEEP_CHUNK = 64
KINDS = ("classical", "noon", "distinguishable", "density", "compare-debroglie")
DEBROGLIE_FILES = {
    "quantum": "quantum",
    "matched_lens_radius": "matched_lens",
    "matched_rayleigh_doubled_order": "matched_rayleigh",
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def config_error(message: str) -> CliError:
    return CliError(message, EXIT_CONFIG)


# -- scenario config ------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    wavelength_nm: float = 810.0
    waist_um: float = 25.0
    z0_mm: float = 0.0
    fiber_mfd_um: float = 5.0
    N: int = 2
    p: int = 0
    p_prime: int = 2
    theta_rad: float = 0.0
    z_range_mm: tuple = (-10.0, 10.0)
    samples: int = 401

    @property
    def beam(self) -> BeamParams:
        return BeamParams(self.wavelength_nm * 1e-9, self.waist_um * 1e-6, self.z0_mm * 1e-3)

    @property
    def fiber(self) -> FiberMode:
        return FiberMode.from_mfd(self.fiber_mfd_um * 1e-6)

    def z_grid(self) -> np.ndarray:
        lo, hi = self.z_range_mm
        return np.linspace(lo * 1e-3, hi * 1e-3, self.samples)

    def noon(self) -> NoonConfig:
        return NoonConfig(self.N, self.p, self.p_prime, self.theta_rad, self.beam, self.fiber)

    def to_json(self) -> dict:
        d = asdict(self)
        d["z_range_mm"] = list(self.z_range_mm)
        return d


FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))


def _key_line(text: str | None, key: str) -> int | None:
    if not text:
        return None
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _where(source: str, text: str | None, key: str) -> str:
    line = _key_line(text, key)
    return f"{source}:{line}" if line else source


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_scenario(values: dict, source: str = "<config>", text: str | None = None) -> ScenarioConfig:
    """Build a ScenarioConfig, raising a config CliError with a line reference."""
    for key in values:
        if key not in FIELD_NAMES:
            raise config_error(f"{_where(source, text, key)}: unknown key {key!r}")
    merged = {**ScenarioConfig().to_json(), **values}

    def fail(key, why):
        raise config_error(f"{_where(source, text, key)}: {key} {why}")

    for key in ("wavelength_nm", "waist_um", "fiber_mfd_um"):
        if not _is_number(merged[key]) or merged[key] <= 0:
            fail(key, f"must be a positive number, got {merged[key]!r}")
    for key in ("z0_mm", "theta_rad"):
        if not _is_number(merged[key]):
            fail(key, f"must be a finite number, got {merged[key]!r}")
    for key, lo in (("N", 1), ("p", 0), ("p_prime", 0), ("samples", 2)):
        v = merged[key]
        if not _is_number(v) or int(v) != v or v < lo:
            fail(key, f"must be an integer >= {lo}, got {v!r}")
        merged[key] = int(v)
    zr = merged["z_range_mm"]
    if not (isinstance(zr, (list, tuple)) and len(zr) == 2 and all(_is_number(v) for v in zr)):
        fail("z_range_mm", f"must be [min, max], got {zr!r}")
    if not zr[0] < zr[1]:
        fail("z_range_mm", f"needs min < max, got {list(zr)!r}")
    merged["z_range_mm"] = (float(zr[0]), float(zr[1]))
    return ScenarioConfig(**merged)


def load_config_file(path) -> tuple[dict, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise config_error(f"{path}: cannot read config ({exc})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise config_error(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise config_error(f"{path}:1: config must be a JSON object")
    return data, text


def _flag_overrides(args) -> dict:
    out = {}
    for name in ("wavelength_nm", "waist_um", "z0_mm", "fiber_mfd_um", "N", "p", "p_prime", "theta_rad", "samples"):
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    if getattr(args, "z_min_mm", None) is not None or getattr(args, "z_max_mm", None) is not None:
        out["z_range_mm"] = [args.z_min_mm, args.z_max_mm]
    return out


def resolve_scenario(args, base: dict | None = None) -> ScenarioConfig:
    """Defaults <- ``base`` <- ``--config`` file <- flags."""
    values, text, source = dict(base or {}), None, "<config>"
    if getattr(args, "config", None):
        data, text = load_config_file(args.config)
        source = str(args.config)
        # file-level validation first, so line numbers refer to the file
        validate_scenario(data, source, text)
        values.update(data)
    flags = _flag_overrides(args)
    if "z_range_mm" in flags:
        cur = list(values.get("z_range_mm", ScenarioConfig().z_range_mm))
        new = flags["z_range_mm"]
        flags["z_range_mm"] = [new[0] if new[0] is not None else cur[0], new[1] if new[1] is not None else cur[1]]
    values.update(flags)
    return validate_scenario(values, "<command line>" if flags else source, None if flags else text)


def resolve_threads(args) -> int:
    raw = args.threads if args.threads is not None else os.environ.get("GOUYSIM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise config_error(f"thread count must be a positive integer, got {raw!r}")
    return n


def sweep(fn, z, threads: int):
    """Evaluate ``fn`` over ``z`` in fixed-size chunks, optionally in parallel.

    The chunking does not depend on ``threads``, so output is bit-identical
    for any thread count.
    """
    z = np.asarray(z, dtype=float)
    chunks = [z[i : i + SWEEP_CHUNK] for i in range(0, z.size, SWEEP_CHUNK)]
    if threads <= 1 or len(chunks) == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    return np.concatenate(parts) if parts else np.empty(0)


@contextlib.contextmanager
def open_out(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


# -- simulate -------------------------------------------------------------------


def _noon_cfg(cfg: ScenarioConfig) -> NoonConfig:
    try:
        return cfg.noon()
    except ValueError as exc:
        raise config_error(f"<config>: {exc}") from exc


def _add_noise(values, seed, level):
    rng = np.random.default_rng(seed)
    return np.clip(values * (1.0 + level * rng.standard_normal(values.shape)), 0.0, None)


def cmd_simulate(args) -> int:
    cfg = resolve_scenario(args)
    threads = resolve_threads(args)
    nc = _noon_cfg(cfg)
    embedded = {"command": "simulate", "kind": args.kind, "scenario": cfg.to_json()}
    if args.noise_seed is not None:
        if not args.noise_level >= 0:
            raise config_error(f"--noise-level must be >= 0, got {args.noise_level!r}")
        embedded["noise"] = {"seed": args.noise_seed, "relative_level": args.noise_level}
    z = cfg.z_grid()

    if args.kind in ("distinguishable", "compare-debroglie") and cfg.N != 2:
        raise config_error(f"<config>: kind {args.kind!r} requires N == 2, got N={cfg.N}")

    if args.kind == "density":
        return _simulate_density(args, cfg, nc, embedded)

    if args.kind == "compare-debroglie":
        if not args.out or args.out == "-":
            raise config_error("compare-debroglie writes three files; give --out as a path prefix")
        written = []
        for scenario in ("matched_lens_radius", "matched_rayleigh_doubled_order"):
            curves = debroglie_comparison(nc, scenario, z)
            for label, curve in curves.items():
                path = Path(f"{args.out}_{DEBROGLIE_FILES[label]}.csv")
                if path in written:
                    continue
                meta = {**embedded, "curve": DEBROGLIE_FILES[label], "curve_params": curve.meta}
                with open_out(path) as fh:
                    write_curve_csv(fh, curve, meta)
                written.append(path)
        for path in written:
            print(path)
        return EXIT_OK

    model = {"classical": classical_signal, "noon": noon_signal, "distinguishable": distinguishable_pair_signal}[
        args.kind
    ]
    values = sweep(lambda zz: model(nc, zz), z, threads)
    if not np.all(np.isfinite(values)):
        raise CliError("non-finite values in simulated curve", EXIT_NUMERIC)
    if args.noise_seed is not None:
        values = _add_noise(values, args.noise_seed, args.noise_level)
    with open_out(args.out) as fh:
        write_curve_csv(fh, Curve(args.kind, z, values), embedded)
    return EXIT_OK


def _simulate_density(args, cfg, nc, embedded) -> int:
    n = args.density_grid
    if n < 2:
        raise config_error(f"--density-grid must be >= 2, got {n}")
    z = cfg.beam.z0 if args.density_z_mm is None else args.density_z_mm * 1e-3
    modes = [LGModeSpec(0, cfg.p, cfg.beam), LGModeSpec(0, cfg.p_prime, cfg.beam)]
    half = 0.5 * (args.density_extent_um * 1e-6 if args.density_extent_um else default_window(modes, (z,)) / 2)
    photons = args.density_photons or cfg.N
    x = np.linspace(-half, half, n)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    d = samepos_density(nc, xx, yy, z, photons)
    peak = d.max()
    d = d / peak if peak > 0 else d
    embedded = {**embedded, "density": {"z_m": z, "grid": n, "photons": photons, "half_width_m": half}}
    with open_out(args.out) as fh:
        write_density_csv(fh, xx, yy, d, embedded)
    return EXIT_OK


# -- fit ------------------------------------------------------------------------


def _embedded_scenario(meta) -> dict:
    cfg = meta.get("config") or {}
    sc = cfg.get("scenario") if isinstance(cfg, dict) else None
    return {k: v for k, v in (sc or {}).items() if k in FIELD_NAMES}


def cmd_fit(args) -> int:
    try:
        if args.raw_counts:
            if args.tau_ns < 0 or args.step_nm <= 0:
                raise config_error("--tau-ns must be >= 0 and --step-nm > 0")
            curve = read_raw_counts_csv(args.data, tau=args.tau_ns * 1e-9, step_size=args.step_nm * 1e-9)
        else:
            curve = read_scan_csv(args.data)
    except ParseError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    embedded = curve.meta.get("config") or {}
    cfg = resolve_scenario(args, _embedded_scenario(curve.meta))
    model = args.model or ("noon" if embedded.get("kind") == "noon" else "classical")
    weighting = "poisson" if args.poisson else args.weighting
    try:
        result = fit_scan(
            curve,
            model,
            (cfg.p, cfg.p_prime),
            cfg.fiber,
            n_photons=cfg.N,
            wavelength=cfg.beam.wavelength,
            weighting=weighting,
        )
        code = EXIT_OK
    except FitError as exc:
        result, code = exc.result, EXIT_NUMERIC
        print(f"error: fit failed: {exc}", file=sys.stderr)
    except ValueError as exc:
        raise CliError(f"{args.data}: {exc}", EXIT_PARSE) from exc
    report = result.to_dict()
    report["n_points"] = len(curve)
    report["has_sigma"] = curve.sigma is not None
    if "clamped" in curve.meta:
        report["clamped_points"] = int(sum(curve.meta["clamped"]))
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    if args.residuals:
        _write_residuals(args.residuals, curve, result, cfg, model)
    return code


def _write_residuals(path, curve, result, cfg, model):
    nc = NoonConfig(
        cfg.N if model == "noon" else 1,
        cfg.p,
        cfg.p_prime,
        result.theta,
        BeamParams(cfg.beam.wavelength, result.w0, result.z0),
        cfg.fiber,
    )
    fn = noon_signal if model == "noon" else classical_signal
    fitted = result.scale * fn(nc, curve.z)
    meta = {"command": "fit", "model": model, "scenario": cfg.to_json(), "fit": result.to_dict()}
    with open_out(path) as fh:
        fh.write(f"# {CONFIG_TAG} {canonical_json(_jsonable(meta))}\n")
        fh.write("z_m,signal,model,residual\n")
        for row in zip(curve.z, curve.signal, fitted, curve.signal - fitted):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# -- qfi ------------------------------------------------------------------------


def cmd_qfi(args) -> int:
    cfg = resolve_scenario(args)
    beam, fiber = cfg.beam, cfg.fiber
    dp = cfg.p_prime - cfg.p
    try:
        qfi = qfi_noon_lg(cfg.N, cfg.p, cfg.p_prime, beam, args.kz_model)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from exc
    fq = heisenberg_term_lg(cfg.N, dp, beam)
    if args.p_max is not None:
        p_max = args.p_max
    else:
        p_max = p_max_from_overlaps(overlap(cfg.p, beam, fiber, beam.z0), overlap(cfg.p_prime, beam, fiber, beam.z0), cfg.N)
    if not 0.0 < p_max <= 1.0:
        raise config_error(f"P_max must lie in (0, 1], got {p_max!r}")
    z = cfg.z_grid()
    cfi = np.asarray(cfi_curve(cfg.N, dp, p_max, beam, z, fq), dtype=float)
    report = {
        "config": cfg.to_json(),
        "kz_model": args.kz_model,
        "qfi": qfi.to_dict(),
        "heisenberg_term_closed_form": fq,
        "p_max": p_max,
        "cfi_focus": cfi_focus(p_max, fq),
        "cfi_samples": {"z_m": z.tolist(), "cfi_per_m2": cfi.tolist()},
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.cfi_out:
        with open_out(args.cfi_out) as fh:
            fh.write(f"# {CONFIG_TAG} {canonical_json({'command': 'qfi', 'scenario': cfg.to_json(), 'p_max': p_max})}\n")
            fh.write("z_m,cfi_per_m2\n")
            for zz, v in zip(z, cfi):
                fh.write(f"{float(zz)!r},{float(v)!r}\n")
    return EXIT_OK


# -- propagate ------------------------------------------------------------------


def parse_mode_spec(spec: str, beam: BeamParams):
    """``lg:P`` (radial LG) or ``hg:M,N``."""
    kind, _, idx = spec.partition(":")
    try:
        nums = [int(v) for v in idx.split(",")] if idx else []
    except ValueError:
        nums = []
    kind = kind.lower()
    if kind == "lg" and len(nums) == 1 and nums[0] >= 0:
        return LGModeSpec(0, nums[0], beam)
    if kind == "hg" and len(nums) == 2 and min(nums) >= 0:
        return HGModeSpec(nums[0], nums[1], beam)
    raise config_error(f"--mode: expected 'lg:P' or 'hg:M,N' with non-negative indices, got {spec!r}")


def cmd_propagate(args) -> int:
    cfg = resolve_scenario(args)
    beam = cfg.beam
    mode = parse_mode_spec(args.mode, beam)
    n = args.grid
    if n < MIN_GRID or n & (n - 1):
        raise config_error(f"--grid must be a power of two >= {MIN_GRID}, got {n}")
    dz = args.dz_zr * beam.z_r if args.dz_zr is not None else args.dz_mm * 1e-3
    window = args.window_um * 1e-6 if args.window_um else default_window([mode], (beam.z0, beam.z0 + dz))
    if window <= 0:
        raise config_error(f"--window-um must be > 0, got {args.window_um}")
    if not args.out:
        raise config_error("propagate needs --out (the dump has a JSON sidecar)")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            field = sample_mode(mode, n, window)
            check_resolution(field)
            out = asm_propagate(field, dz, args.kz_model)
    except RuntimeWarning as exc:
        raise config_error(f"under-resolved grid: {exc}") from exc
    except ValueError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from exc
    embedded = {
        "command": "propagate",
        "mode": args.mode,
        "dz_m": dz,
        "grid": n,
        "window_m": window,
        "kz_model": args.kz_model,
        "scenario": cfg.to_json(),
    }
    sidecar = dump_field(out, args.out, header_lines=(f"{CONFIG_TAG} {canonical_json(embedded)}",), extra_meta={"config": embedded})
    print(args.out)
    print(sidecar)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _scenario_flags(p: argparse.ArgumentParser, z_axis: bool = True):
    g = p.add_argument_group("scenario (overrides --config)")
    g.add_argument("--config", help="scenario JSON file")
    g.add_argument("--wavelength-nm", dest="wavelength_nm", type=float)
    g.add_argument("--waist-um", dest="waist_um", type=float)
    g.add_argument("--z0-mm", dest="z0_mm", type=float)
    g.add_argument("--fiber-mfd-um", dest="fiber_mfd_um", type=float)
    g.add_argument("--N", "-N", dest="N", type=int, help="photon number")
    g.add_argument("--p", dest="p", type=int, help="reference radial index")
    g.add_argument("--p-prime", dest="p_prime", type=int, help="probe radial index")
    g.add_argument("--theta-rad", dest="theta_rad", type=float)
    if z_axis:
        g.add_argument("--z-min-mm", dest="z_min_mm", type=float)
        g.add_argument("--z-max-mm", dest="z_max_mm", type=float)
        g.add_argument("--samples", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gouysim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="coupling curves and same-position densities as CSV")
    _scenario_flags(s)
    s.add_argument("--kind", choices=KINDS, default="noon")
    s.add_argument("--out", help="output file (stdout if omitted); path prefix for compare-debroglie")
    s.add_argument("--threads", type=int, help="worker threads for z sweeps (default: GOUYSIM_THREADS or all cores)")
    s.add_argument("--noise-seed", type=int, help="add seeded relative Gaussian noise")
    s.add_argument("--noise-level", type=float, default=0.05, help="relative noise level (default 0.05)")
    s.add_argument("--density-grid", type=int, default=128)
    s.add_argument("--density-extent-um", type=float, help="full width of the density grid")
    s.add_argument("--density-z-mm", type=float, help="plane of the density (default z0)")
    s.add_argument("--density-photons", type=int, help="photons at the same point (default N; 1 gives the intensity)")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a focal scan and print FitResult JSON")
    f.add_argument("data", help="scan CSV (z_m,signal[,sigma]) or raw counts with --raw-counts")
    _scenario_flags(f, z_axis=False)
    f.add_argument("--model", choices=("classical", "noon"))
    f.add_argument("--raw-counts", action="store_true", help="input is steps,coincidences,singles1,singles2")
    f.add_argument("--tau-ns", type=float, default=1.0, help="coincidence window (default 1 ns)")
    f.add_argument("--step-nm", type=float, default=20.0, help="piezo step size (default 20 nm)")
    f.add_argument("--weighting", choices=("auto", "none", "sigma", "poisson"), default="auto")
    f.add_argument("--poisson", action="store_true", help="shorthand for --weighting poisson")
    f.add_argument("--residuals", help="write z_m,signal,model,residual CSV here")
    f.set_defaults(func=cmd_fit)

    q = sub.add_parser("qfi", help="quantum and classical Fisher information report (JSON)")
    _scenario_flags(q)
    q.add_argument("--kz-model", choices=("paraxial", "exact"), default="paraxial")
    q.add_argument("--p-max", type=float, help="override the focal coupling probability")
    q.add_argument("--cfi-out", help="write z_m,cfi_per_m2 CSV here")
    q.set_defaults(func=cmd_qfi)

    pr = sub.add_parser("propagate", help="dump an angular-spectrum propagated mode")
    _scenario_flags(pr, z_axis=False)
    pr.add_argument("--mode", required=True, help="lg:P or hg:M,N")
    dz = pr.add_mutually_exclusive_group()
    dz.add_argument("--dz-mm", type=float, default=0.0)
    dz.add_argument("--dz-zr", type=float, help="distance in Rayleigh lengths")
    pr.add_argument("--grid", type=int, default=1024)
    pr.add_argument("--window-um", type=float, help="full window width (default 8x the largest mode radius)")
    pr.add_argument("--kz-model", choices=("paraxial", "exact"), default="paraxial")
    pr.add_argument("--out", help="CSV path; a .json sidecar is written next to it")
    pr.set_defaults(func=cmd_propagate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
