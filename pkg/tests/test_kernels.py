"""Kernel and closure-coefficient tests against independent oracles."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import iv

from swarmscale.errors import NormalizationError
from swarmscale.kernels import (
    AlignmentDistribution,
    AngularGrid,
    B0_moments,
    InteractionKernel,
    TurnKernel,
    closure_coefficients,
    coefficient_z,
    coefficients_a,
    coefficients_inhomogeneous,
    eigenvalue_nu1,
    hyperbolic_corrections,
    surface_area,
    turn_operator_apply,
)
from swarmscale.params import ModelParams


def bessel_ratio(p, kappa):
    return iv(p, kappa) / iv(0, kappa)


def vm_circle_moment(kappa, weight):
    """Adaptive-quadrature oracle for von Mises moments on the circle."""
    num = quad(lambda s: np.exp(kappa * np.cos(s)) * weight(s), 0.0,
               2.0 * np.pi, limit=400)[0]
    den = quad(lambda s: np.exp(kappa * np.cos(s)), 0.0, 2.0 * np.pi,
               limit=400)[0]
    return num / den


class TestNu1:
    def test_uniform_is_exactly_zero(self):
        k = TurnKernel(family="uniform")
        assert eigenvalue_nu1(k) == 0.0

    def test_von_mises_kappa2_matches_bessel_oracle(self):
        # frozen from the quadrature oracle; cross-checked against I1/I0
        k = TurnKernel(family="von-mises", concentration=2.0)
        nu1 = eigenvalue_nu1(k)
        assert nu1 == pytest.approx(0.697774657964, abs=1e-10)
        assert nu1 == pytest.approx(bessel_ratio(1, 2.0), abs=1e-10)
        assert nu1 == pytest.approx(vm_circle_moment(2.0, np.cos), abs=1e-10)

    @pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0, 5.0, 10.0])
    def test_below_one(self, kappa):
        k = TurnKernel(family="von-mises", concentration=kappa)
        assert eigenvalue_nu1(k) < 1.0

    def test_monotone_in_concentration_and_approaches_one(self):
        vals = [eigenvalue_nu1(TurnKernel(family="von-mises", concentration=k))
                for k in (1.0, 10.0, 100.0)]
        assert vals[0] < vals[1] < vals[2] < 1.0
        assert vals[2] > 0.99

    def test_sphere_von_mises_matches_quad_oracle(self):
        k = TurnKernel(family="von-mises", concentration=5.0, dimension=3)
        oracle = 1.0 / np.tanh(5.0) - 1.0 / 5.0
        assert eigenvalue_nu1(k) == pytest.approx(oracle, abs=1e-10)

    def test_rejects_unnormalized_table(self):
        s = np.linspace(0.0, np.pi, 32)
        k = TurnKernel(family="tabulated", table=(s, np.ones_like(s) * 3.0),
                       renormalize=False)
        with pytest.raises(NormalizationError):
            eigenvalue_nu1(k)


class TestZ:
    def test_uniform_zero(self):
        phi = AlignmentDistribution(family="uniform")
        assert coefficient_z(phi) == 0.0

    def test_von_mises_kappa4(self):
        phi = AlignmentDistribution(family="von-mises", concentration=4.0)
        z = coefficient_z(phi)
        assert z == pytest.approx(0.863522611025, abs=1e-10)
        assert z == pytest.approx(bessel_ratio(1, 4.0), abs=1e-10)

    def test_sphere_kappa5_closed_form(self):
        phi = AlignmentDistribution(family="von-mises", concentration=5.0,
                                    dimension=3)
        z = coefficient_z(phi)
        assert z == pytest.approx(1.0 / np.tanh(5.0) - 0.2, abs=1e-10)
        assert z == pytest.approx(0.800090803982, abs=1e-10)

    def test_monotone_in_kappa_and_bounded(self):
        kappas = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 30.0]
        zs = [coefficient_z(AlignmentDistribution(family="von-mises",
                                                  concentration=k))
              for k in kappas]
        assert zs[0] == 0.0
        assert all(a < b for a, b in zip(zs, zs[1:]))
        assert zs[-1] <= 1.0

    def test_delta_is_one(self):
        assert coefficient_z(AlignmentDistribution(family="delta")) == 1.0


class TestA:
    @pytest.mark.parametrize("kappa", [0.0, 0.7, 2.0, 4.0, 9.0])
    def test_sum_to_one_on_circle(self, kappa):
        fam = "uniform" if kappa == 0.0 else "von-mises"
        phi = AlignmentDistribution(family=fam, concentration=kappa)
        a0, a1, a3 = coefficients_a(phi)
        assert a0 + a1 == pytest.approx(1.0, abs=1e-10)
        assert a3 == pytest.approx(a0 - a1, abs=1e-14)

    def test_uniform_splits_evenly(self):
        a0, a1, a3 = coefficients_a(AlignmentDistribution(family="uniform"))
        assert a0 == pytest.approx(0.5, abs=1e-12)
        assert a1 == pytest.approx(0.5, abs=1e-12)
        assert a3 == pytest.approx(0.0, abs=1e-12)

    def test_von_mises_kappa4_against_bessel_oracle(self):
        # quadrature oracle value; equals (1 + I2(4)/I0(4)) / 2
        phi = AlignmentDistribution(family="von-mises", concentration=4.0)
        a0, a1, _ = coefficients_a(phi)
        assert a0 == pytest.approx(0.784119347244, abs=1e-10)
        assert a0 == pytest.approx((1.0 + bessel_ratio(2, 4.0)) / 2.0, abs=1e-10)
        assert a1 == pytest.approx(1.0 - a0, abs=1e-12)

    def test_sphere_moments_sum_with_transverse_double(self):
        # on the sphere cos^2 + sin^2 = 1 means a0 + 2 a1 = 1
        phi = AlignmentDistribution(family="von-mises", concentration=3.0,
                                    dimension=3)
        a0, a1, _ = coefficients_a(phi)
        assert a0 + 2.0 * a1 == pytest.approx(1.0, abs=1e-10)

    def test_sphere_sin4_variant_differs(self):
        phi = AlignmentDistribution(family="von-mises", concentration=3.0,
                                    dimension=3)
        _, a1_sin3, _ = coefficients_a(phi, n3_a1_weight="sin3")
        _, a1_sin4, _ = coefficients_a(phi, n3_a1_weight="sin4")
        assert a1_sin4 != pytest.approx(a1_sin3, rel=1e-3)


class TestInhomogeneous:
    def test_zero_flux_gives_zero(self):
        phi = AlignmentDistribution(family="von-mises", concentration=4.0)
        zbar, a0b, a1b, a3b = coefficients_inhomogeneous(phi, 0.0)
        assert zbar == 0.0 and a0b == 0.0 and a1b == 0.0

    def test_uniform_at_unit_flux(self):
        phi = AlignmentDistribution(family="uniform")
        zbar, a0b, a1b, _ = coefficients_inhomogeneous(phi, 1.0)
        assert zbar == pytest.approx(0.0, abs=1e-12)
        assert a0b == pytest.approx(0.5, abs=1e-10)
        assert a1b == pytest.approx(0.5, abs=1e-10)

    @pytest.mark.parametrize("ell", [0.25, 1.0, 2.5])
    def test_matches_rescaled_renormalized_distribution(self, ell):
        # brute-force oracle: zbar(ell) = ell * <cos> under the distribution
        # exp(kappa * ell * cos) renormalized on the circle
        kappa = 3.0
        phi = AlignmentDistribution(family="von-mises", concentration=kappa)
        zbar, a0b, a1b, _ = coefficients_inhomogeneous(phi, ell)
        assert zbar == pytest.approx(ell * vm_circle_moment(kappa * ell, np.cos),
                                     abs=1e-9)
        assert zbar == pytest.approx(ell * bessel_ratio(1, kappa * ell), abs=1e-9)
        assert a0b + a1b == pytest.approx(ell * ell, abs=1e-9)
        assert abs(zbar) <= ell + 1e-12

    def test_requires_planar_distribution(self):
        phi = AlignmentDistribution(family="von-mises", concentration=2.0,
                                    dimension=3)
        with pytest.raises(ValueError):
            coefficients_inhomogeneous(phi, 1.0)
        phi2 = AlignmentDistribution(family="von-mises", concentration=2.0)
        with pytest.raises(ValueError):
            coefficients_inhomogeneous(phi2, -0.5)


class TestTurnOperator:
    def test_constant_is_fixed_point(self):
        grid = AngularGrid(m=64)
        k = TurnKernel(family="von-mises", concentration=1.5)
        f = np.full(grid.m, 3.7)
        out = turn_operator_apply(k, f, grid)
        np.testing.assert_allclose(out, f, atol=1e-12)

    def test_cosine_is_eigenfunction_with_nu1(self):
        grid = AngularGrid(m=256)
        k = TurnKernel(family="von-mises", concentration=2.0)
        nu1 = eigenvalue_nu1(k)
        f = np.cos(grid.thetas)
        out = turn_operator_apply(k, f, grid)
        np.testing.assert_allclose(out, nu1 * f, atol=1e-10)

    def test_mass_preserved_for_random_tabulation(self):
        grid = AngularGrid(m=48)
        rng = np.random.default_rng(7)
        f = rng.uniform(0.0, 2.0, size=grid.m)
        k = TurnKernel(family="von-mises", concentration=0.8)
        out = turn_operator_apply(k, f, grid)
        assert np.sum(out) == pytest.approx(np.sum(f), rel=1e-13)

    def test_grid_mismatch_raises(self):
        grid = AngularGrid(m=16)
        k = TurnKernel(family="uniform")
        with pytest.raises(ValueError):
            turn_operator_apply(k, np.ones(17), grid)


class TestB0Moments:
    def test_uniform_mean_zero_isotropic_diffusion(self):
        b0 = AlignmentDistribution(family="uniform")
        mean, d = B0_moments(b0, c_p=0.8, beta=2.0)
        np.testing.assert_allclose(mean, 0.0, atol=1e-12)
        # (c_p / (|S| beta)) * (1/2 Id) * |S| = c_p/(2 beta) Id
        np.testing.assert_allclose(d, 0.8 / 4.0 * np.eye(2), atol=1e-12)

    def test_concentrated_mean_along_axis(self):
        b0 = AlignmentDistribution(family="von-mises", concentration=2.0)
        axis = np.array([0.6, 0.8])
        mean, _ = B0_moments(b0, c_p=1.0, beta=1.0, axis=axis)
        mag = np.linalg.norm(mean)
        assert mag == pytest.approx(bessel_ratio(1, 2.0), abs=1e-10)
        np.testing.assert_allclose(mean / mag, axis, atol=1e-12)

    def test_symmetric_kernel_diagonal_in_axis_frame(self):
        b0 = AlignmentDistribution(family="von-mises", concentration=3.0)
        _, d = B0_moments(b0, c_p=1.0, beta=1.0, axis=(1.0, 0.0))
        assert d[0, 1] == pytest.approx(0.0, abs=1e-14)
        assert d[1, 0] == pytest.approx(0.0, abs=1e-14)
        evals = np.linalg.eigvalsh(d)
        assert np.all(evals >= 0.0)


class TestHyperbolicCorrections:
    def test_uniform_base_kernel(self):
        b0 = AlignmentDistribution(family="uniform")
        corr = hyperbolic_corrections(b0, c_p=0.9, beta=1.5)
        assert corr.q1_scalar == pytest.approx(0.9 / 1.5, abs=1e-10)
        np.testing.assert_allclose(corr.q2, 0.0)
        np.testing.assert_allclose(corr.streaker_coeff, 0.0, atol=1e-12)

    def test_isotropic_rate_moment_vanishes(self):
        b0 = AlignmentDistribution(family="von-mises", concentration=1.0)
        corr = hyperbolic_corrections(b0, c_p=1.0, beta=1.0,
                                      rate_angular_mean=(0.0, 0.0))
        # streaker coefficient reduces to |S| * B0 mean for isotropic rates
        expected = surface_area(2) * B0_moments(b0, 1.0, 1.0)[0]
        np.testing.assert_allclose(corr.streaker_coeff, expected, atol=1e-12)

    def test_q1_tensor_trace_matches_scalar(self):
        b0 = AlignmentDistribution(family="von-mises", concentration=2.5)
        corr = hyperbolic_corrections(b0, c_p=0.7, beta=1.1)
        assert np.trace(corr.q1_tensor) == pytest.approx(corr.q1_scalar,
                                                         abs=1e-12)


class TestInvariantsAndConvergence:
    @pytest.mark.parametrize("kappa", [0.0, 0.3, 1.0, 10.0, 100.0])
    @pytest.mark.parametrize("dimension", [2, 3])
    def test_normalization_within_tolerance(self, kappa, dimension):
        fam = "uniform" if kappa == 0.0 else "von-mises"
        k = TurnKernel(family=fam, concentration=kappa, dimension=dimension)
        assert k.normalization_defect(m=8192) < 1e-10

    def test_self_convergence_under_doubling(self):
        # doubling the base resolution must not move the converged value
        phi = AlignmentDistribution(family="von-mises", concentration=6.0)
        z_a = coefficient_z(phi, tol=1e-10)
        z_b = coefficient_z(phi, tol=1e-12)
        assert z_a == pytest.approx(z_b, abs=1e-10)

    def test_interaction_kernel_profiles(self):
        top = InteractionKernel(family="top-hat", radius=2.0)
        assert top.profile(1.9) == 1.0 and top.profile(2.1) == 0.0
        gauss = InteractionKernel(family="gaussian", radius=1.0)
        assert gauss.profile(0.0) == pytest.approx(1.0)
        assert gauss.profile(10.0) == 0.0
        with pytest.raises(ValueError):
            InteractionKernel(family="top-hat", radius=-1.0)


class TestCoefficientSet:
    def test_bundle_consistency(self):
        params = ModelParams(zeta=0.3, c_f=0.7, c_p=0.7, beta=1.0)
        turn = TurnKernel(family="von-mises", concentration=1.0)
        align = AlignmentDistribution(family="von-mises", concentration=4.0)
        b0 = AlignmentDistribution(family="von-mises", concentration=2.0)
        coeffs = closure_coefficients(turn, align, b0, params)
        denom = 1.0 - params.zeta * coeffs.nu1
        assert coeffs.d_align == pytest.approx(
            coeffs.z * (1.0 - params.zeta) / denom, rel=1e-12)
        assert coeffs.c_f_coeff == pytest.approx(
            params.c_f / (params.beta * denom), rel=1e-12)
        assert coeffs.c1 == pytest.approx(
            params.c_f * (1.0 - params.zeta) * coeffs.a3, rel=1e-12)
        assert coeffs.c2 == pytest.approx(
            params.c_f * ((1.0 - params.zeta) * coeffs.a1
                          + np.pi * params.zeta), rel=1e-12)

    def test_mean_direction_convention_divides_by_n(self):
        params = ModelParams()
        turn = TurnKernel(family="von-mises", concentration=1.0)
        align = AlignmentDistribution(family="uniform")
        b0 = AlignmentDistribution(family="uniform")
        a = closure_coefficients(turn, align, b0, params,
                                 diffusion_convention="final-system")
        b = closure_coefficients(turn, align, b0, params,
                                 diffusion_convention="mean-direction")
        assert b.c_f_coeff == pytest.approx(a.c_f_coeff / 2.0, rel=1e-12)
        # kinetic-consistent coefficient equals the velocity-jump constant
        # of the mixed process when the alignment branch is uniform
        assert params.c_f * b.c_f_coeff == pytest.approx(
            params.c_f ** 2 / (2.0 * params.beta * (1.0 - params.zeta * a.nu1)),
            rel=1e-12)

    def test_inhomogeneous_table_interpolates(self):
        params = ModelParams()
        turn = TurnKernel(family="uniform")
        align = AlignmentDistribution(family="von-mises", concentration=3.0)
        b0 = AlignmentDistribution(family="uniform")
        coeffs = closure_coefficients(turn, align, b0, params,
                                      with_inhomogeneous=True)
        ells = np.array([0.0, 0.5, 1.7])
        zb = coeffs.inhomogeneous.zbar(ells)
        exact = [coefficients_inhomogeneous(align, e)[0] for e in ells]
        np.testing.assert_allclose(zb, exact, atol=2e-5)
        assert zb[0] == 0.0
