"""Estimate constants, shell energy forms, damping and smoothing diagnostics."""

import numpy as np
import pytest

from nspbox.energy import (
    EnergyMonitor,
    accumulate_v,
    all_shell_energies,
    compute_constants,
    damping_margins,
    display_equivalence_bounds,
    envelopes_nonincreasing,
    equivalence_bounds,
    feasibility_margins,
    fit_damping_constant,
    global_bound_check,
    initial_energy,
    linear_decay_rate_bound,
    shell_energy,
    smoothing_integral,
)
from nspbox.lp import DEFAULT_PROFILE, hybrid_norm, shell_filters
from nspbox.model import FluidParams, NspState
from nspbox.spectral import SpectralField, random_field
from nspbox.stepper import FriedrichsStepper, StepperConfig, linear_reference_run

from conftest import wave
from test_model import small_state

PARAMS = FluidParams(mu=1.0, lam=0.0, rho_bar=1.0, dim=3)


def random_pair_state(grid, seed, h_scale=1.0, c_scale=1.0, xi_lo=0.0, xi_hi=None) -> NspState:
    rng = np.random.default_rng(seed)
    h = h_scale * random_field(grid, 1, rng, xi_lo=xi_lo, xi_hi=xi_hi)
    c = c_scale * random_field(grid, 1, rng, xi_lo=xi_lo, xi_hi=xi_hi)
    npairs = grid.dim * (grid.dim - 1) // 2
    return NspState(h=h, c=c, I=SpectralField.zeros(grid, npairs))


class TestConstants:
    def test_reference_values(self):
        c = compute_constants(PARAMS)
        assert c.M1 == 0.25
        assert c.M2 == 0.15625
        assert c.K1 == 0.125
        assert c.M3 == 1.0
        assert c.K2 == 0.5

    def test_half_shear_viscosity(self):
        c = compute_constants(FluidParams(mu=0.5, lam=0.0, rho_bar=1.0, dim=3))
        assert c.K2 == 0.25
        assert c.M3 == 0.5

    def test_cross_constant_strictly_below_m1(self):
        for mu in (0.1, 1.0, 10.0):
            for lam in (-mu / 2.0, 0.0, 3.0):
                for rho in (0.2, 1.0, 7.0):
                    p = FluidParams(mu=mu, lam=lam, rho_bar=rho, dim=3)
                    c = compute_constants(p)
                    assert c.K1 < c.M1
                    assert all(m > 0 for m in feasibility_margins(p, c).values())

    def test_branch_switch_in_k1(self):
        # the rational branch wins at extreme viscosities, the sqrt cap in between
        thin = compute_constants(FluidParams(mu=0.05, lam=0.0, rho_bar=1.0, dim=3))
        assert thin.K1 == pytest.approx(0.1 / 1.02)
        middle = compute_constants(FluidParams(mu=1.0, lam=0.0, rho_bar=1.0, dim=3))
        assert middle.K1 == 0.125
        thick = compute_constants(FluidParams(mu=5.0, lam=0.0, rho_bar=1.0, dim=3))
        assert thick.K1 == pytest.approx(10.0 / 201.0)


class TestShellEnergy:
    def test_zero_state(self, grid3):
        consts = compute_constants(PARAMS)
        for k in shell_filters(grid3).ks:
            sh = shell_energy(NspState.zeros(grid3), k, consts, PARAMS)
            assert sh.alpha_sq == 0.0
            assert sh.norm_h == 0.0 and sh.norm_c == 0.0

    def test_low_shell_single_mode_closed_form(self, grid3):
        consts = compute_constants(PARAMS)
        amp = 0.4
        s = NspState(
            h=wave(grid3, (1, 0, 0), amp=amp),
            c=SpectralField.zeros(grid3),
            I=SpectralField.zeros(grid3, 3),
        )
        for k in (-1, 0):
            w = float(DEFAULT_PROFILE.phi(np.asarray(2.0**-k)))
            mode_norm = w * amp / np.sqrt(2.0)
            expected = (1.0 + 1.0) * mode_norm**2  # rho_bar = 1 and |xi| = 1
            got = shell_energy(s, k, consts, PARAMS)
            assert got.alpha_sq == pytest.approx(expected, rel=1e-12)

    def test_positive_on_random_states(self, grid3):
        consts = compute_constants(PARAMS)
        for seed in range(200):
            s = random_pair_state(grid3, seed=seed, h_scale=np.exp(seed % 5 - 2), c_scale=1.0)
            for sh in all_shell_energies(s, consts, PARAMS):
                assert sh.alpha_sq >= -1e-12 * max(sh.norm_h, sh.norm_c, 1.0) ** 2

    def test_equivalence_sandwich(self, grid3):
        consts = compute_constants(PARAMS)
        s = random_pair_state(grid3, seed=60)
        for sh in all_shell_energies(s, consts, PARAMS):
            c1, c2 = equivalence_bounds(grid3, sh.k, consts, PARAMS)
            if sh.k <= 0:
                total = sh.norm_h**2 + sh.weighted["lam_h"] ** 2 + sh.norm_c**2
            else:
                total = (
                    sh.weighted["lam12_h"] ** 2
                    + sh.weighted["lam32_h"] ** 2
                    + sh.weighted["lam52_h"] ** 2
                    + sh.weighted["lam12_c"] ** 2
                )
            assert c1 * sh.alpha_sq - 1e-10 <= total <= c2 * sh.alpha_sq + 1e-10
            assert 0.0 < c1 <= c2

    def test_display_weight_sandwich(self, grid3):
        consts = compute_constants(PARAMS)
        s = random_pair_state(grid3, seed=61)
        for sh in all_shell_energies(s, consts, PARAMS):
            if sh.alpha_sq <= 1e-20:
                continue
            d1, d2 = display_equivalence_bounds(grid3, sh.k, consts, PARAMS)
            disp = max(1.0, 2.0 ** (5 * sh.k)) * sh.norm_h**2 + max(1.0, 2.0**sh.k) * sh.norm_c**2
            ratio = disp / sh.alpha_sq
            assert d1 - 1e-10 <= ratio <= d2 + 1e-10

    def test_empty_shell_rejected_in_bounds(self, grid3):
        consts = compute_constants(PARAMS)
        with pytest.raises(ValueError, match="no lattice modes"):
            equivalence_bounds(grid3, 40, consts, PARAMS)


@pytest.fixture(scope="module")
def linear_traj(grid3):
    consts = compute_constants(PARAMS)
    s0 = random_pair_state(grid3, seed=62, h_scale=1.0, c_scale=0.5)
    cfg = StepperConfig(dt=1e-3, n=float(grid3.size), t_end=0.5)
    monitor = EnergyMonitor(PARAMS, consts)
    return linear_reference_run(s0, cfg, PARAMS, monitor=monitor, stride=25)


class TestDamping:
    def test_fit_is_positive_and_margins_close(self, grid3, linear_traj):
        c_fit = fit_damping_constant(linear_traj.records)
        assert c_fit > 0.0
        margins = damping_margins(linear_traj.records, c_fit)
        assert max(margins.values()) <= 1e-8

    def test_fit_dominates_per_mode_bound(self, grid3, linear_traj):
        # the quadratic-form analysis yields a guaranteed decay rate; the
        # fitted constant on an actual run can only be faster
        consts = compute_constants(PARAMS)
        bound = linear_decay_rate_bound(grid3, consts, PARAMS)
        assert bound > 0.0
        c_fit = fit_damping_constant(linear_traj.records)
        assert c_fit >= 0.9 * bound

    def test_envelopes_monotone(self, linear_traj):
        assert envelopes_nonincreasing(linear_traj.records)

    def test_single_high_shell_decays_at_least_at_fit_rate(self, grid3):
        consts = compute_constants(PARAMS)
        s0 = random_pair_state(grid3, seed=63, xi_lo=5.4, xi_hi=10.6)  # shell k = 3 band
        cfg = StepperConfig(dt=1e-3, n=float(grid3.size), t_end=0.1)
        monitor = EnergyMonitor(PARAMS, consts)
        traj = linear_reference_run(s0, cfg, PARAMS, monitor=monitor, stride=10)
        c_fit = fit_damping_constant(traj.records)
        alphas = [np.sqrt(r.shells[4].alpha_sq) for r in traj.records]  # k = 3 slot
        assert traj.records[0].shells[4].k == 3
        rate = (np.log(alphas[0]) - np.log(alphas[-1])) / (traj.records[-1].t - traj.records[0].t)
        assert rate >= 0.95 * c_fit

    def test_short_window_rejected(self, linear_traj):
        with pytest.raises(ValueError, match="3 monitored"):
            fit_damping_constant(linear_traj.records[:2])
        with pytest.raises(ValueError, match="3 monitored"):
            damping_margins(linear_traj.records[:2], 1.0)

    def test_zero_trajectory_margins_vanish(self, grid3):
        consts = compute_constants(PARAMS)
        cfg = StepperConfig(dt=1e-3, n=8.0, t_end=0.01)
        monitor = EnergyMonitor(PARAMS, consts)
        traj = linear_reference_run(NspState.zeros(grid3), cfg, PARAMS, monitor=monitor, stride=2)
        margins = damping_margins(traj.records, c_fit=1.0)
        assert all(v == 0.0 for v in margins.values())


class TestSmoothing:
    def test_zero_trajectory(self, grid3):
        consts = compute_constants(PARAMS)
        cfg = StepperConfig(dt=1e-3, n=8.0, t_end=0.01)
        monitor = EnergyMonitor(PARAMS, consts)
        traj = linear_reference_run(NspState.zeros(grid3), cfg, PARAMS, monitor=monitor, stride=2)
        assert smoothing_integral(traj.records, 1.5) == 0.0

    def _c_only_run(self, grid, params, t_end=0.5):
        consts = compute_constants(params)
        rng = np.random.default_rng(64)
        c0 = random_field(grid, 1, rng, xi_lo=2.0)
        s0 = NspState(h=SpectralField.zeros(grid), c=c0, I=SpectralField.zeros(grid, 3))
        cfg = StepperConfig(dt=1e-3, n=float(grid.size), t_end=t_end)
        monitor = EnergyMonitor(params, consts)
        traj = linear_reference_run(s0, cfg, params, monitor=monitor, stride=10)
        reg = 0.5 * grid.dim
        integral = smoothing_integral(traj.records, reg)
        initial = hybrid_norm(s0.h, (reg, reg + 1.5)) + hybrid_norm(s0.c, (reg - 1.0, reg - 0.5))
        return integral, initial

    def test_high_frequency_integral_is_controlled(self, grid3):
        integral, initial = self._c_only_run(grid3, PARAMS)
        assert 0.0 < integral < 10.0 * initial

    def test_inverse_viscosity_scaling(self, grid3):
        thick, initial = self._c_only_run(grid3, PARAMS, t_end=1.0)
        thin, _ = self._c_only_run(
            grid3, FluidParams(mu=0.5, lam=0.0, rho_bar=1.0, dim=3), t_end=1.0
        )
        ratio = thin / thick
        assert 2.0 / 1.5 <= ratio <= 2.0 * 1.5


class TestAccumulateV:
    def test_zero_series(self):
        out = accumulate_v([0.0, 0.5, 1.0], [0.0, 0.0, 0.0])
        assert np.all(out == 0.0)

    def test_constant_integrand(self):
        times = np.linspace(0.0, 2.0, 9)
        out = accumulate_v(times, np.full(9, 3.0))
        assert out[-1] == pytest.approx(6.0, rel=1e-14)
        assert np.allclose(out, 3.0 * times)

    def test_non_decreasing(self):
        rng = np.random.default_rng(65)
        vals = rng.uniform(0.0, 1.0, 50)
        out = accumulate_v(np.linspace(0, 1, 50), vals)
        assert np.all(np.diff(out) >= 0.0)

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            accumulate_v([0.0, 1.0], [1.0, -1.0])


class TestGlobalBound:
    def test_zero_data_passes_with_zero_ratio(self, grid3):
        consts = compute_constants(PARAMS)
        cfg = StepperConfig(dt=1e-3, n=8.0, t_end=0.01)
        monitor = EnergyMonitor(PARAMS, consts)
        traj = linear_reference_run(NspState.zeros(grid3), cfg, PARAMS, monitor=monitor, stride=2)
        verdict = global_bound_check(traj.records, monitor.e0, consts)
        assert verdict.passed and verdict.max_ratio == 0.0

    def test_growth_detected(self, grid3):
        import dataclasses

        consts = compute_constants(PARAMS)
        cfg = StepperConfig(dt=1e-3, n=8.0, t_end=0.02)
        monitor = EnergyMonitor(PARAMS, consts)
        traj = linear_reference_run(
            random_pair_state(grid3, seed=66), cfg, PARAMS, monitor=monitor, stride=4
        )
        blown = [dataclasses.replace(r, e_value=r.e_value * 1e9) for r in traj.records]
        verdict = global_bound_check(blown, monitor.e0, consts)
        assert not verdict.passed


class TestMonitor:
    def test_ratio_starts_at_one_and_e_monotone(self, grid3):
        consts = compute_constants(PARAMS)
        s0 = small_state(grid3, seed=67, amp=1e-3)
        cfg = StepperConfig(dt=1e-3, n=8.0, t_end=0.05)
        monitor = EnergyMonitor(PARAMS, consts)
        traj = FriedrichsStepper(grid3, PARAMS, cfg).run(s0, monitor=monitor, stride=10)
        assert traj.records[0].e_ratio == pytest.approx(1.0, rel=1e-12)
        es = [r.e_value for r in traj.records]
        assert all(b >= a - 1e-15 for a, b in zip(es, es[1:]))
        vs = [r.v_accum for r in traj.records]
        assert all(b >= a for a, b in zip(vs, vs[1:]))

    def test_initial_energy_matches_monitor(self, grid3):
        s0 = small_state(grid3, seed=68, amp=1e-3)
        consts = compute_constants(PARAMS)
        monitor = EnergyMonitor(PARAMS, consts)
        report = monitor(s0)
        assert monitor.e0 == pytest.approx(initial_energy(s0), rel=1e-14)
        assert report.e_value == pytest.approx(monitor.e0, rel=1e-14)

    def test_decreasing_time_rejected(self, grid3):
        consts = compute_constants(PARAMS)
        monitor = EnergyMonitor(PARAMS, consts)
        s0 = small_state(grid3, seed=69, amp=1e-3)
        monitor(s0)
        earlier = NspState(s0.h, s0.c, s0.I, t=-1.0)
        with pytest.raises(ValueError, match="decreasing"):
            monitor(earlier)

    def test_damping_margin_field_with_c_fit(self, grid3):
        consts = compute_constants(PARAMS)
        monitor = EnergyMonitor(PARAMS, consts, c_fit=1e-6)
        s0 = random_pair_state(grid3, seed=70)
        cfg = StepperConfig(dt=1e-3, n=float(grid3.size), t_end=0.02)
        traj = linear_reference_run(s0, cfg, PARAMS, monitor=monitor, stride=5)
        assert traj.records[0].damping_margin is None
        later = [r.damping_margin for r in traj.records[1:]]
        assert all(m is not None and m <= 1e-8 for m in later)

    def test_smoothing_margin_with_calibrated_constant(self, grid3):
        from frozen import FROZEN

        consts = compute_constants(PARAMS)
        rng = np.random.default_rng(71)
        c0 = random_field(grid3, 1, rng, xi_lo=2.0)
        s0 = NspState(h=SpectralField.zeros(grid3), c=c0, I=SpectralField.zeros(grid3, 3))
        cfg = StepperConfig(dt=1e-3, n=float(grid3.size), t_end=0.3)
        monitor = EnergyMonitor(
            PARAMS, consts, smoothing_c=FROZEN["smoothing_majorant_constant"]
        )
        traj = linear_reference_run(s0, cfg, PARAMS, monitor=monitor, stride=10)
        margins = [r.smoothing_margin for r in traj.records]
        assert all(m is not None for m in margins)
        assert all(m <= 0.0 for m in margins)

    def test_convection_weight_series(self, grid3):
        from nspbox.energy import convection_weighted

        consts = compute_constants(PARAMS)
        s0 = small_state(grid3, seed=72, amp=1e-3)
        cfg = StepperConfig(dt=1e-3, n=8.0, t_end=0.02)
        monitor = EnergyMonitor(PARAMS, consts)
        traj = FriedrichsStepper(grid3, PARAMS, cfg).run(s0, monitor=monitor, stride=5)
        plain = convection_weighted(traj.records, 0.0, "hybrid_h")
        assert np.allclose(plain, [r.hybrid_h for r in traj.records])
        damped = convection_weighted(traj.records, 50.0, "hybrid_h")
        weights = damped / plain
        assert weights[0] == 1.0
        assert np.all(np.diff(weights) <= 0.0)
