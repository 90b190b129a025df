"""Transforms, multiplier operators, Poisson solve, and the Helmholtz split."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nspbox.spectral import (
    Grid,
    SpectralField,
    apply_lambda,
    divergence,
    curl,
    gradient,
    helmholtz_decompose,
    helmholtz_recompose,
    hermitian_defect,
    inner,
    l2_norm,
    poisson_solve,
    random_field,
    transform_to_physical,
    transform_to_spectral,
)

from conftest import constant, wave


class TestGrid:
    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            Grid(dim=3, size=12)
        with pytest.raises(ValueError):
            Grid(dim=3, size=4)
        with pytest.raises(ValueError):
            Grid(dim=4, size=16)
        with pytest.raises(ValueError):
            Grid(dim=3, size=16, length=-1.0)

    def test_lattice_symmetry_without_nyquist(self, grid3):
        # every surviving wavenumber has its negative on the lattice
        keep = grid3.keep_mask > 0
        for xi in grid3.wavenumbers:
            flipped = np.roll(np.flip(xi, axis=(0, 1, 2)), 1, axis=(0, 1, 2))
            assert np.array_equal(xi[keep], -flipped[keep])

    def test_xi_extremes(self, grid3):
        assert grid3.xi_min == pytest.approx(1.0)
        assert grid3.xi_max == pytest.approx(np.sqrt(3) * 7.0)


class TestTransforms:
    def test_round_trip_is_identity(self, grid3):
        rng = np.random.default_rng(0)
        f = random_field(grid3, 1, rng)
        back = transform_to_spectral(grid3, transform_to_physical(f))
        assert np.max(np.abs(back.coef - f.coef)) < 1e-12

    def test_parseval(self, grid3):
        rng = np.random.default_rng(1)
        for _ in range(100):
            f = random_field(grid3, 1, rng)
            phys = transform_to_physical(f)
            phys_norm = np.sqrt(np.mean(phys**2))
            assert abs(phys_norm - l2_norm(f)) < 1e-10 * phys_norm

    def test_impulse_has_flat_spectrum(self, grid3):
        values = np.zeros(grid3.shape)
        values[0, 0, 0] = 1.0
        f = transform_to_spectral(grid3, values)
        flat = 1.0 / grid3.size**3
        on = ~grid3.nyquist_mask
        assert np.allclose(f.coef[0][on], flat, atol=1e-15)
        assert np.all(f.coef[0][grid3.nyquist_mask] == 0)

    def test_random_field_is_hermitian_and_nyquist_free(self, grid3):
        f = random_field(grid3, 3, np.random.default_rng(2))
        assert hermitian_defect(f) < 1e-12
        assert np.all(f.coef[:, grid3.nyquist_mask] == 0)
        phys = transform_to_physical(f)
        assert phys.dtype == np.float64

    def test_shape_mismatch_rejected(self, grid3):
        with pytest.raises(ValueError):
            transform_to_spectral(grid3, np.zeros((8, 8, 8)))


class TestApplyLambda:
    def test_unit_mode_any_power_unchanged(self, grid3):
        f = wave(grid3, (1, 0, 0))
        out = apply_lambda(f, 2.0)
        assert np.max(np.abs(out.coef - f.coef)) < 1e-15

    def test_constant_maps_to_zero_for_negative_power(self, grid3):
        f = constant(grid3, 1.0)
        out = apply_lambda(f, -1.0)
        assert l2_norm(out) == 0.0

    def test_cos_two_x_first_power(self, grid3):
        # |xi| = 2 on both conjugate modes
        f = wave(grid3, (2, 0, 0))
        out = apply_lambda(f, 1.0)
        expected = wave(grid3, (2, 0, 0), amp=2.0)
        assert np.max(np.abs(out.coef - expected.coef)) < 1e-14

    def test_zero_power_keeps_mean(self, grid3):
        f = constant(grid3, 3.0)
        assert np.max(np.abs(apply_lambda(f, 0.0).coef - f.coef)) == 0.0

    @pytest.mark.parametrize("s", [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
    def test_round_trip_on_mean_free_fields(self, grid3, s):
        rng = np.random.default_rng(int(10 * abs(s)) + 3)
        for _ in range(10):
            f = random_field(grid3, 1, rng)
            back = apply_lambda(apply_lambda(f, s), -s)
            assert np.max(np.abs(back.coef - f.coef)) < 1e-10 * np.max(np.abs(f.coef))

    def test_non_finite_exponent_rejected(self, grid3):
        f = wave(grid3, (1, 0, 0))
        with pytest.raises(ValueError):
            apply_lambda(f, np.nan)
        with pytest.raises(ValueError):
            apply_lambda(f, np.inf)

    @settings(max_examples=20, deadline=None, derandomize=True)
    @given(s=st.floats(min_value=-2.5, max_value=2.5), seed=st.integers(0, 2**16))
    def test_homogeneity_property(self, s, seed):
        grid = Grid(dim=2, size=16)
        f = random_field(grid, 1, np.random.default_rng(seed))
        assert l2_norm(apply_lambda(2.0 * f, s)) == pytest.approx(
            2.0 * l2_norm(apply_lambda(f, s)), rel=1e-12
        )


class TestPoisson:
    def test_cos_mode(self, grid3):
        phi = poisson_solve(wave(grid3, (1, 0, 0)))
        expected = wave(grid3, (1, 0, 0), amp=-1.0)
        assert np.max(np.abs(phi.coef - expected.coef)) < 1e-14

    def test_zero_source(self, grid3):
        phi = poisson_solve(SpectralField.zeros(grid3))
        assert l2_norm(phi) == 0.0

    def test_two_mode_source(self, grid3):
        theta = wave(grid3, (1, 0, 0)) + wave(grid3, (0, 2, 0))
        phi = poisson_solve(theta)
        expected = wave(grid3, (1, 0, 0), amp=-1.0) + wave(grid3, (0, 2, 0), amp=-0.25)
        assert np.max(np.abs(phi.coef - expected.coef)) < 1e-14

    def test_residual_on_random_source(self, grid3):
        theta = random_field(grid3, 1, np.random.default_rng(4))
        phi = poisson_solve(theta)
        residual = SpectralField(grid3, -grid3.lam_sq * phi.coef) - theta
        assert l2_norm(residual) < 1e-10 * l2_norm(theta)

    def test_mean_rejected(self, grid3):
        theta = constant(grid3, 1.0) + wave(grid3, (1, 0, 0))
        with pytest.raises(ValueError, match="charge"):
            poisson_solve(theta)

    def test_output_mean_free_and_parity_preserved(self, grid3):
        phi = poisson_solve(wave(grid3, (3, 1, 0)))
        assert np.max(np.abs(phi.zero_mode())) == 0.0
        vals = transform_to_physical(phi)[0]
        flipped = np.roll(vals[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
        assert np.max(np.abs(vals - flipped)) < 1e-12  # even source -> even solution

        odd = poisson_solve(wave(grid3, (2, 0, 1), kind="sin"))
        vals = transform_to_physical(odd)[0]
        flipped = np.roll(vals[::-1, ::-1, ::-1], 1, axis=(0, 1, 2))
        assert np.max(np.abs(vals + flipped)) < 1e-12


class TestHelmholtz:
    def test_gradient_field_has_no_rotational_part(self, grid3):
        g = random_field(grid3, 1, np.random.default_rng(5))
        pair = helmholtz_decompose(gradient(g))
        assert l2_norm(pair.I) < 1e-12 * max(l2_norm(pair.c), 1e-30)
        expected_c = -1.0 * apply_lambda(g, 1.0)
        assert np.max(np.abs(pair.c.coef - expected_c.coef)) < 1e-10 * np.max(np.abs(expected_c.coef))

    def test_divergence_free_2d_field_has_no_compressible_part(self, grid2):
        psi = random_field(grid2, 1, np.random.default_rng(6))
        xi = grid2.wavenumbers
        u = SpectralField(grid2, np.stack([-1j * xi[1] * psi.coef[0], 1j * xi[0] * psi.coef[0]]))
        pair = helmholtz_decompose(u)
        assert l2_norm(pair.c) < 1e-12 * l2_norm(u)
        back = helmholtz_recompose(pair)
        assert np.max(np.abs(back.coef - u.coef)) < 1e-10 * np.max(np.abs(u.coef))

    def test_shear_mode_3d(self, grid3):
        u = SpectralField.zeros(grid3, 3)
        shear = wave(grid3, (0, 1, 0), kind="sin")  # u = (sin x2, 0, 0)
        u = SpectralField(grid3, np.concatenate([shear.coef, np.zeros((2,) + grid3.shape)]))
        pair = helmholtz_decompose(u)
        assert l2_norm(pair.c) < 1e-13
        back = helmholtz_recompose(pair)
        assert np.max(np.abs(back.coef - u.coef)) < 1e-10

    def test_round_trip_random(self, grid3):
        rng = np.random.default_rng(7)
        for _ in range(10):
            u = random_field(grid3, 3, rng)
            pair = helmholtz_decompose(u)
            back = helmholtz_recompose(pair)
            assert np.max(np.abs(back.coef - u.coef)) < 1e-10 * np.max(np.abs(u.coef))

    def test_zero_pair_recomposes_to_zero(self, grid3):
        from nspbox.spectral import HelmholtzPair

        pair = HelmholtzPair(SpectralField.zeros(grid3), SpectralField.zeros(grid3, 3))
        assert l2_norm(helmholtz_recompose(pair)) == 0.0

    def test_part_orthogonality(self, grid3):
        from nspbox.spectral import HelmholtzPair

        u = random_field(grid3, 3, np.random.default_rng(8))
        pair = helmholtz_decompose(u)
        grad_part = helmholtz_recompose(HelmholtzPair(pair.c, SpectralField.zeros(grid3, 3)))
        sol_part = helmholtz_recompose(HelmholtzPair(SpectralField.zeros(grid3), pair.I))
        ip = abs(inner(grad_part, sol_part))
        assert ip < 1e-10 * l2_norm(grad_part) * l2_norm(sol_part)

    def test_div_div_antisymmetric_vanishes(self, grid3):
        from nspbox.spectral import antisym_divergence

        u = random_field(grid3, 3, np.random.default_rng(9))
        pair = helmholtz_decompose(u)
        dd = divergence(antisym_divergence(pair.I))
        assert l2_norm(dd) < 1e-12 * max(l2_norm(pair.I), 1e-30)

    def test_single_mode_potential_gives_curl_free_velocity(self, grid3):
        from nspbox.spectral import HelmholtzPair

        c = wave(grid3, (2, 1, 0))
        u = helmholtz_recompose(HelmholtzPair(c, SpectralField.zeros(grid3, 3)))
        assert l2_norm(curl(u)) < 1e-12 * l2_norm(u)

    def test_mean_velocity_rejected(self, grid3):
        u = random_field(grid3, 3, np.random.default_rng(10))
        coef = u.coef.copy()
        coef[0, 0, 0, 0] = 1.0
        with pytest.raises(ValueError, match="mean-free"):
            helmholtz_decompose(SpectralField(grid3, coef))
