import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gouysim.analysis import (
    FitError,
    FitResult,
    ParseError,
    ScanCurve,
    accidental_correct,
    adjusted_r2,
    fit_scan,
    raw_counts_to_scan,
    read_raw_counts_csv,
    read_scan_csv,
    steps_to_position,
    wrap_angle,
)
from gouysim.beamgeom import BeamParams, FiberMode
from gouysim.interference import NoonConfig, classical_signal, noon_signal

from .conftest import LAMBDA, W0

DATA = Path(__file__).parent / "data"
Z = np.linspace(-10e-3, 10e-3, 201)
LAB_FIBER = FiberMode.from_mfd(5e-6)


def synthetic(model="classical", theta=0.3, scale=0.8, w0=W0, z0=0.0, pp=4, fiber=LAB_FIBER, N=2):
    cfg = NoonConfig(N if model == "noon" else 1, 0, pp, theta, BeamParams(LAMBDA, w0, z0), fiber)
    fn = noon_signal if model == "noon" else classical_signal
    return scale * fn(cfg, Z)


class TestCorrections:
    def test_accidentals(self):
        v, clamped = accidental_correct(100, 1000, 1000, 1e-9)
        assert v == pytest.approx(99.999, abs=1e-12) and not clamped
        assert accidental_correct(37.5, 0, 5e5) == (37.5, False)
        assert accidental_correct(0.5, 1e5, 1e5) == (0.0, True)

    def test_accidentals_vectorized_and_errors(self):
        v, c = accidental_correct(np.array([10.0, 0.0]), np.array([1e3, 1e5]), np.array([1e3, 1e5]))
        assert v.tolist() == [10.0 - 1e-3, 0.0] and c.tolist() == [False, True]
        with pytest.raises(ValueError):
            accidental_correct(-1, 1, 1)
        with pytest.raises(ValueError):
            accidental_correct(1, 1, -1)

    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0.1, 10))
    def test_linear_above_clamp(self, c, s1, s2, a):
        acc = s1 * s2 * 1e-9
        v1, k1 = accidental_correct(c + acc, s1, s2)
        v2, k2 = accidental_correct(a * c + acc, s1, s2)
        assert not (k1 or k2)
        assert v2 == pytest.approx(a * v1, rel=1e-9, abs=1e-9 * (1 + acc))

    def test_steps(self):
        assert steps_to_position(0) == 0
        assert steps_to_position(50000) == pytest.approx(1e-3, rel=1e-15)
        assert steps_to_position(50000, 24e-9) == pytest.approx(1.2e-3, rel=1e-15)


class TestAdjustedR2:
    def test_perfect_and_mean_only(self):
        y = np.array([1.0, 2.0, 4.0, 3.0, 5.0, 7.0, 6.0])
        assert adjusted_r2(np.zeros_like(y), y) == 1.0
        assert adjusted_r2(y - y.mean(), y) <= 0

    def test_errors(self):
        with pytest.raises(ValueError):
            adjusted_r2(np.zeros(5), np.arange(5.0))
        with pytest.raises(ValueError):
            adjusted_r2(np.zeros(10), np.ones(10))


class TestScanCurve:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ScanCurve([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            ScanCurve([0.0, 1.0], [1.0, -1.0])
        with pytest.raises(ValueError):
            ScanCurve([0.0, 1.0], [1.0, 1.0], [0.1, -0.1])
        assert len(ScanCurve([0.0, 1.0], [1.0, 1.0], [0.0, 0.0])) == 2

    def test_wrap_angle(self):
        assert wrap_angle(math.pi) == math.pi
        assert wrap_angle(-math.pi) == math.pi
        assert wrap_angle(0.3 + 4 * math.pi) == pytest.approx(0.3, abs=1e-14)
        assert wrap_angle(-0.3 - 2 * math.pi) == pytest.approx(-0.3, abs=1e-14)


class TestFit:
    def test_noiseless_classical_round_trip(self):
        y = synthetic()
        r = fit_scan(ScanCurve(Z, y), "classical", (0, 4), LAB_FIBER)
        truth = {"scale": 0.8, "w0": W0, "theta": 0.3}
        for k, v in truth.items():
            assert getattr(r, k) == pytest.approx(v, rel=1e-3)
        assert abs(r.z0) < 1e-3 * BeamParams(LAMBDA, W0).z_r
        assert r.adjusted_r2 >= 0.9999
        assert r.weighting == "unweighted"
        assert r.covariance.shape == (4, 4)
        assert np.allclose(r.covariance, r.covariance.T)

    def test_cost_history_non_increasing(self):
        y = synthetic("noon") * (1 + 0.05 * np.random.default_rng(3).standard_normal(Z.size))
        r = fit_scan(ScanCurve(Z, np.clip(y, 0, None)), "noon", (0, 4), LAB_FIBER)
        assert np.all(np.diff(r.cost_history) <= 0)

    def test_noisy_noon(self):
        y0 = synthetic("noon")
        good = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            y = np.clip(y0 * (1 + 0.05 * rng.standard_normal(Z.size)), 0, None)
            r = fit_scan(ScanCurve(Z, y), "noon", (0, 4), LAB_FIBER, n_photons=2)
            good += abs(r.w0 / W0 - 1) < 0.01 and r.adjusted_r2 >= 0.95
        assert good >= 19

    def test_rescaling_only_changes_scale(self):
        y = np.clip(synthetic() * (1 + 0.03 * np.random.default_rng(5).standard_normal(Z.size)), 0, None)
        a = fit_scan(ScanCurve(Z, y), "classical", (0, 4), LAB_FIBER)
        b = fit_scan(ScanCurve(Z, 1e4 * y), "classical", (0, 4), LAB_FIBER)
        assert b.scale == pytest.approx(1e4 * a.scale, rel=1e-6)
        for k in ("w0", "z0", "theta"):
            assert getattr(b, k) == pytest.approx(getattr(a, k), rel=1e-6, abs=1e-12)

    def test_theta_seed_periodicity(self):
        y = synthetic(theta=2.9)
        curve = ScanCurve(Z, y)
        seed = FitResult(0.7, 24e-6, 1e-5, 2.7, 0, 0, np.eye(4))
        seed2 = FitResult(0.7, 24e-6, 1e-5, 2.7 + 2 * math.pi, 0, 0, np.eye(4))
        a = fit_scan(curve, "classical", (0, 4), LAB_FIBER, init=seed)
        b = fit_scan(curve, "classical", (0, 4), LAB_FIBER, init=seed2)
        assert a.theta == pytest.approx(b.theta, abs=1e-8)
        assert -math.pi < a.theta <= math.pi
        assert a.theta == pytest.approx(2.9, abs=1e-6)

    def test_sigma_weighting(self):
        rng = np.random.default_rng(11)
        y0 = synthetic()
        sigma = 0.02 * y0 + 1e-4
        y = np.clip(y0 + sigma * rng.standard_normal(Z.size), 0, None)
        r = fit_scan(ScanCurve(Z, y, sigma), "classical", (0, 4), LAB_FIBER)
        assert r.weighting == "sigma"
        assert r.w0 == pytest.approx(W0, rel=0.01)
        # weighted chi^2 per dof near one -> covariance is the raw inverse
        assert 0.5 < r.residual_norm**2 / (Z.size - 4) < 1.5

    def test_poisson_weighting(self):
        y = np.round(1e4 * synthetic())
        r = fit_scan(ScanCurve(Z, y), "classical", (0, 4), LAB_FIBER, weighting="poisson")
        assert r.weighting == "poisson"
        assert r.w0 == pytest.approx(W0, rel=0.01)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_scan(ScanCurve(Z[:7], synthetic()[:7]), "classical", (0, 4), LAB_FIBER)

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            fit_scan(ScanCurve(Z, synthetic()), "quantum", (0, 4), LAB_FIBER)

    def test_non_convergence_raises_with_result(self):
        y = synthetic()
        with pytest.raises(FitError) as info:
            fit_scan(ScanCurve(Z, y), "classical", (0, 4), LAB_FIBER, max_iter=1)
        assert info.value.result is not None and not info.value.result.converged

    def test_rank_deficiency_reported(self):
        # a flat zero signal leaves w0, z0 and theta unconstrained
        with pytest.raises(FitError, match="rank"):
            fit_scan(ScanCurve(Z, np.zeros(Z.size) + 1e-30 * np.arange(Z.size)), "classical", (0, 4), LAB_FIBER)

    def test_to_dict_keys(self):
        r = fit_scan(ScanCurve(Z, synthetic()), "classical", (0, 4), LAB_FIBER)
        d = r.to_dict()
        for key in ("scale", "w0_m", "z0_m", "theta_rad", "adjusted_r2", "residual_norm", "covariance"):
            assert key in d
        assert len(d["covariance"]) == 4

    def test_contamination_stays_in_observed_band(self):
        # a few percent of an unmodelled neighbouring mode in the probe arm
        beam = BeamParams(LAMBDA, W0)
        cfg = NoonConfig(2, 0, 4, 0.3, beam, LAB_FIBER)
        from gouysim.coupling import overlap

        a = overlap(0, beam, LAB_FIBER, Z)
        b = overlap(4, beam, LAB_FIBER, Z) + 0.05 * overlap(3, beam, LAB_FIBER, Z)
        y = 0.5 * np.abs(a**2 - np.exp(-1j * cfg.theta) * b**2) ** 2
        r = fit_scan(ScanCurve(Z, y), "noon", (0, 4), LAB_FIBER)
        assert 24.95e-6 <= r.w0 <= 26.81e-6


class TestReaders:
    def test_scan_csv(self, tmp_path):
        p = tmp_path / "scan.csv"
        p.write_text('# gouysim-config: {"kind": "noon"}\nz_m,signal,sigma\n0.002,0.5,0.01\n0.001,0.25,0.02\n')
        c = read_scan_csv(p)
        assert c.z.tolist() == [0.001, 0.002]
        assert c.sigma.tolist() == [0.02, 0.01]
        assert c.meta["config"] == {"kind": "noon"}

    def test_value_alias_and_no_sigma(self, tmp_path):
        p = tmp_path / "curve.csv"
        p.write_text("z_m,value\n0,1\n1,2\n")
        c = read_scan_csv(p)
        assert c.sigma is None and c.signal.tolist() == [1.0, 2.0]

    @pytest.mark.parametrize(
        "text",
        ["z_m,other\n0,1\n", "z_m,signal\n0,1,2\n", "z_m,signal\n0,abc\n", "", "z_m,signal\n0,1\n0,2\n"],
    )
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(ParseError):
            read_scan_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            read_scan_csv(tmp_path / "nope.csv")

    def test_raw_counts_fixture(self):
        c = read_raw_counts_csv(DATA / "raw_counts.csv")
        exp = np.loadtxt(DATA / "raw_counts_expected.csv", delimiter=",", comments="#", skiprows=2)
        assert np.array_equal(c.z, exp[:, 0])
        assert np.array_equal(c.signal, exp[:, 1])
        assert c.meta["clamped"] == exp[:, 2].astype(bool).tolist()

    def test_raw_counts_sorted(self):
        c = raw_counts_to_scan([3, 1, 2], [10, 20, 30], [0, 0, 0], [0, 0, 0])
        assert c.signal.tolist() == [20.0, 30.0, 10.0]
