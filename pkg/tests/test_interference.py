import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gouysim.beamgeom import BeamParams, FiberMode, LGModeSpec, lg_field
from gouysim.coupling import overlap
from gouysim.interference import (
    Curve,
    NoonConfig,
    bruteforce_noon_signal,
    classical_signal,
    count_fringe_crossings,
    debroglie_comparison,
    debroglie_config,
    distinguishable_pair_signal,
    fringe_levels,
    fringe_phase,
    noon_signal,
    oscillatory_part,
    radial_second_moment,
    samepos_density,
    twophoton_samepos_density,
    with_theta,
    write_curve_csv,
    write_density_csv,
)

from .conftest import LAMBDA, W0


def cfg_for(N=2, p=0, pp=1, theta=0.0, wf=W0, z0=0.0):
    return NoonConfig(N, p, pp, theta, BeamParams(LAMBDA, W0, z0), FiberMode(wf))


class TestConfig:
    @pytest.mark.parametrize("args", [(0, 0, 1), (2, 1, 1), (2, -1, 1), (1.5, 0, 1)])
    def test_invalid(self, args):
        N, p, pp = args
        with pytest.raises(ValueError):
            NoonConfig(N, p, pp, 0.0, BeamParams(LAMBDA, W0), FiberMode(W0))

    def test_delta_p(self):
        assert cfg_for(pp=4).delta_p == 4


class TestSignals:
    def test_matched_fiber_focus(self):
        assert classical_signal(cfg_for(theta=0.0), 0.0) == pytest.approx(1.0, abs=1e-15)
        assert classical_signal(cfg_for(theta=math.pi), 0.0) == pytest.approx(1.0, abs=1e-15)
        assert noon_signal(cfg_for(), 0.0) == pytest.approx(0.5, abs=1e-15)
        assert distinguishable_pair_signal(cfg_for(), 0.0) == pytest.approx(0.25, abs=1e-15)

    def test_single_photon_is_half_classical(self, beam):
        z = np.linspace(-10e-3, 10e-3, 101)
        cfg = cfg_for(N=1, pp=3, theta=0.4, wf=2.5e-6)
        assert np.allclose(noon_signal(cfg, z), 0.5 * classical_signal(cfg, z), rtol=1e-13, atol=0)

    def test_bunched_to_unbunched_ratio(self):
        z = np.linspace(-10e-3, 10e-3, 101)
        cfg = cfg_for(pp=4, wf=2.5e-6, theta=1.1)
        ratio = noon_signal(cfg, z) / distinguishable_pair_signal(cfg, z)
        assert np.all(ratio == 2.0)
        with pytest.raises(ValueError):
            distinguishable_pair_signal(cfg_for(N=3), z)

    def test_classical_cosine_form(self):
        cfg = cfg_for(pp=2, theta=0.7, wf=5e-6)
        z = np.linspace(-5e-3, 5e-3, 51)
        a, b = overlap(0, cfg.beam, cfg.fiber, z), overlap(2, cfg.beam, cfg.fiber, z)
        alt = np.abs(a) ** 2 + np.abs(b) ** 2 - 2 * np.abs(a * b) * np.cos(fringe_phase(with_theta(cfg, 0.7), z, 1))
        assert np.allclose(classical_signal(cfg, z), alt, rtol=1e-12, atol=1e-16)

    def test_small_fiber_fringe_argument(self, beam, small_fiber):
        # p=0 vs p'=4: psi = arg(A_0 conj(A_4)) follows -8 arctan((z - z0)/z_R) for a small fiber
        cfg = NoonConfig(1, 0, 4, 0.0, beam, small_fiber)
        z = np.linspace(-10 * beam.z_r, 10 * beam.z_r, 4001)
        psi = fringe_phase(cfg, z, 1)
        psi -= psi[2000]
        assert np.max(np.abs(psi + 8 * np.arctan(z / beam.z_r))) < 0.05
        assert count_fringe_crossings(oscillatory_part(cfg, z, 1)) == 8


theta_st = st.floats(-2 * math.pi, 2 * math.pi)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.integers(1, 4), theta_st, st.floats(-20, 20), st.floats(0.05, 2))
def test_signal_bounds_and_theta_periodicity(N, p, dp, theta, t, ratio):
    cfg = NoonConfig(N, p, p + dp, theta, BeamParams(LAMBDA, W0), FiberMode(ratio * W0))
    z = t * cfg.beam.z_r
    q = noon_signal(cfg, z)
    c = classical_signal(cfg, z)
    a, b = abs(overlap(p, cfg.beam, cfg.fiber, z)), abs(overlap(p + dp, cfg.beam, cfg.fiber, z))
    assert 0 <= q <= 1
    assert 0 <= c <= 4
    assert q <= 0.5 * (a**N + b**N) ** 2 * (1 + 1e-12)
    shifted = with_theta(cfg, theta + 2 * math.pi)
    assert noon_signal(shifted, z) == pytest.approx(q, abs=1e-12)
    assert classical_signal(shifted, z) == pytest.approx(c, abs=1e-12)
    # theta + pi swaps the sign of the interference term
    flipped = with_theta(cfg, theta + math.pi)
    assert noon_signal(cfg, z) + noon_signal(flipped, z) == pytest.approx(0.5 * 2 * (a ** (2 * N) + b ** (2 * N)), abs=1e-12)


class TestFringes:
    def test_crossing_counter(self):
        assert count_fringe_crossings([1, -1, 0, -2, 3, 4, -1]) == 3
        assert count_fringe_crossings([]) == 0

    @pytest.mark.parametrize("pp", [1, 2, 3])
    def test_quantum_doubles_the_count(self, beam, small_fiber, pp):
        z = np.linspace(-10 * beam.z_r, 10 * beam.z_r, 8001)
        cfg = NoonConfig(2, 0, pp, 0.0, beam, small_fiber)
        cl = count_fringe_crossings(oscillatory_part(cfg, z, 1))
        qu = count_fringe_crossings(oscillatory_part(cfg, z, 2))
        assert (cl, qu) == (2 * pp, 4 * pp)

    def test_levels_lie_on_requested_phase(self, beam, small_fiber):
        cfg = NoonConfig(2, 0, 3, 0.2, beam, small_fiber)
        z = np.linspace(-10 * beam.z_r, 10 * beam.z_r, 4001)
        roots = fringe_levels(cfg, z, math.pi / 2, 2)
        assert roots.size == count_fringe_crossings(oscillatory_part(cfg, z, 2))
        assert np.max(np.abs(np.cos(fringe_phase(cfg, roots, 2)))) < 1e-9

    def test_position_scaling(self, beam, small_fiber):
        """Quantum fringe positions map onto classical ones with half the arctan argument."""
        cfg = NoonConfig(2, 0, 2, 0.0, beam, small_fiber)
        z = np.linspace(-10 * beam.z_r, 10 * beam.z_r, 8001)
        zc = fringe_levels(cfg, z, math.pi / 2, 1)
        zq = fringe_levels(cfg, z, math.pi / 2, 2)
        ac = np.arctan((zc - beam.z0) / beam.z_r)
        aq = np.arctan((zq - beam.z0) / beam.z_r)
        # every classical level at arctan a has a quantum partner at a/2
        for a in ac:
            i = np.argmin(np.abs(aq - a / 2))
            period = np.pi / (2 * 2 * cfg.delta_p)
            assert abs(aq[i] - a / 2) < 0.02 * period


class TestDensity:
    def test_cancels_on_axis_when_fields_match(self, beam):
        cfg = NoonConfig(2, 0, 4, 0.0, beam, FiberMode(W0))
        # on-axis u_0p(0, z0) = sqrt(2/pi)/w0 for every p
        assert samepos_density(cfg, 0.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-30)

    def test_normalized_to_grid_max(self, beam):
        cfg = NoonConfig(2, 0, 4, 0.0, beam, FiberMode(W0))
        x = np.linspace(-3 * W0, 3 * W0, 65)
        xx, yy = np.meshgrid(x, x, indexing="ij")
        d = twophoton_samepos_density(cfg, xx, yy, 0.0)
        assert d.max() == 1.0 and d.min() >= 0.0
        with pytest.raises(ValueError):
            twophoton_samepos_density(NoonConfig(3, 0, 4, 0.0, beam, FiberMode(W0)), xx, yy, 0.0)

    @pytest.mark.parametrize("zf", [0.0, 2.0, 30.0])
    def test_reduces_to_fourth_power_where_probe_vanishes(self, beam, zf):
        # at a radial node of u_0p' only the reference term survives
        from numpy.polynomial.laguerre import lagroots

        cfg = NoonConfig(2, 0, 4, 0.9, beam, FiberMode(W0))
        z = zf * beam.z_r
        w = beam.w0 * math.hypot(1, zf)
        x_nodes = lagroots([0, 0, 0, 0, 1])
        r = w * np.sqrt(x_nodes / 2)
        d = samepos_density(cfg, r, 0.0, z)
        ref = 0.5 * np.abs(lg_field(LGModeSpec(0, 0, beam), r, z)) ** 4
        assert np.allclose(d, ref, rtol=1e-9)

    def test_confinement(self, beam):
        cfg = NoonConfig(2, 0, 4, 0.0, beam, FiberMode(W0))
        assert radial_second_moment(cfg, 0.0, 2) < radial_second_moment(cfg, 0.0, 1)


class TestDeBroglie:
    def test_configs(self, beam, lab_fiber):
        cfg = NoonConfig(2, 0, 2, 0.3, beam, lab_fiber)
        lens = debroglie_config(cfg, "matched_lens_radius")
        assert lens.beam.wavelength == LAMBDA / 2 and lens.beam.w0 == W0 / 2
        assert lens.fiber.w_f == pytest.approx(lab_fiber.w_f / 2)
        ray = debroglie_config(cfg, "matched_rayleigh_doubled_order")
        assert ray.beam.z_r == pytest.approx(beam.z_r, rel=1e-14)
        assert (ray.p, ray.p_prime) == (0, 4)
        with pytest.raises(ValueError):
            debroglie_config(cfg, "other")

    def test_comparison_labels(self, beam, lab_fiber):
        cfg = NoonConfig(2, 0, 2, 0.0, beam, lab_fiber)
        out = debroglie_comparison(cfg, "matched_lens_radius", np.linspace(-1e-3, 1e-3, 11))
        assert set(out) == {"quantum", "matched_lens_radius"}
        assert all(isinstance(c, Curve) for c in out.values())


class TestBruteForce:
    def test_grid_oracle_matches_analytic(self, beam):
        cfg = NoonConfig(2, 0, 2, 0.4, beam, FiberMode(12.5e-6))
        z = np.linspace(-2 * beam.z_r, 2 * beam.z_r, 5)
        brute = bruteforce_noon_signal(cfg, z, n=256)
        assert np.max(np.abs(brute - noon_signal(cfg, z))) < 1e-3


def test_curve_csv(beam):
    c = Curve("noon", np.array([2e-3, -1e-3]), np.array([0.25, 1 / 3]))
    buf = io.StringIO()
    write_curve_csv(buf, c, {"b": 1, "a": [1, 2]})
    lines = buf.getvalue().splitlines()
    assert lines[0] == '# gouysim-config: {"a":[1,2],"b":1}'
    assert lines[1] == "z_m,value"
    assert lines[2] == "-0.001,0.3333333333333333"
    assert float(lines[2].split(",")[1]) == 1 / 3


def test_density_csv():
    buf = io.StringIO()
    write_density_csv(buf, [[0.0]], [[1e-6]], [[0.5]])
    assert buf.getvalue().splitlines() == ["x_m,y_m,value", "0.0,1e-06,0.5"]
