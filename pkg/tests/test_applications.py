import math

import numpy as np
import pytest

from csfmm.applications import (
    BveConfig,
    BveState,
    ScalarField,
    bve_initial,
    bve_run,
    bve_step,
    bve_velocity,
    exact_solution,
    fit_loglog_slope,
    gaussian_vortex_vorticity,
    real_spherical_harmonic,
    relative_l2_error,
    remesh,
    remesh_values,
    rk4_advance,
    rossby_haurwitz_vorticity,
    sal_eigenvalue,
    sal_potential,
    solve_greens,
    synthetic_ssh,
)
from csfmm.errors import (
    ConfigurationError,
    DegenerateReferenceError,
    DimensionMismatchError,
    InputFormatError,
)
from csfmm.geometry import build_grid, lonlat_to_xyz
from csfmm.kernels import SalParams
from csfmm.summation import TraversalConfig, direct_sum

from .conftest import random_unit

DIRECT = TraversalConfig(method="direct")


class TestErrorMetric:
    def test_identical_fields(self, rng):
        f = rng.standard_normal(10)
        assert relative_l2_error(f, f, f, np.ones(10)) == 0.0

    def test_double_exact(self, rng):
        f = rng.standard_normal(10)
        assert relative_l2_error(2 * f, f, f, rng.uniform(0.1, 1, 10)) == pytest.approx(1.0, rel=1e-15)

    def test_three_point_hand_value(self):
        # numerator (0.1^2*1 + 0.2^2*2 + 0^2*3) = 0.09, denominator (1*1 + 4*2 + 9*3) = 36
        e = relative_l2_error([1.1, 1.8, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert e == pytest.approx(0.05, rel=1e-14)

    def test_vector_fields(self):
        ex = np.array([[1.0, 0, 0], [0, 2.0, 0]])
        assert relative_l2_error(ex * 2, ex, ex, [1.0, 1.0]) == pytest.approx(1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateReferenceError):
            relative_l2_error([1.0], [0.0], [0.0], [1.0])

    def test_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            relative_l2_error([1.0, 2.0], [1.0], [1.0], [1.0])

    def test_slope(self):
        n = np.array([10.0, 100.0, 1000.0])
        assert fit_loglog_slope(n, 3.0 / n) == pytest.approx(-1.0, abs=1e-12)
        with pytest.raises(ConfigurationError):
            fit_loglog_slope([1.0], [1.0])


class TestHarmonics:
    def test_orthonormal(self):
        g = build_grid("icosahedral", 5)
        Y = real_spherical_harmonic(4, 3, g.centers)
        assert np.sum(Y * Y * g.areas) == pytest.approx(1.0, abs=2e-3)
        assert abs(np.sum(Y * real_spherical_harmonic(4, -3, g.centers) * g.areas)) < 1e-3

    def test_y10(self, rng):
        p = random_unit(rng, 20)
        np.testing.assert_allclose(real_spherical_harmonic(1, 0, p), math.sqrt(3 / (4 * math.pi)) * p[:, 2],
                                   rtol=1e-13)


class TestGreens:
    def test_zero_field(self, ico3):
        f = ScalarField.on_grid(ico3, np.zeros(len(ico3)))
        assert np.all(solve_greens(f) == 0)

    def test_field_length_check(self, ico3):
        with pytest.raises(DimensionMismatchError):
            ScalarField.on_grid(ico3, np.zeros(3))

    def test_nonzero_mean_warns(self, ico3):
        with pytest.warns(RuntimeWarning):
            solve_greens(ScalarField.on_grid(ico3, np.ones(len(ico3))), config=DIRECT)

    def test_rejects_other_kernels(self, ico3):
        with pytest.raises(ConfigurationError):
            solve_greens(ScalarField.on_grid(ico3, np.zeros(len(ico3))), "biot_savart")

    @pytest.mark.parametrize("kernel,lam,tol", [("laplace", 20.0, 0.1), ("biharmonic", 400.0, 0.02)])
    def test_eigenfunction(self, ico4, kernel, lam, tol):
        Y = real_spherical_harmonic(4, 3, ico4.centers)
        phi = solve_greens(ScalarField.on_grid(ico4, Y), kernel)
        np.testing.assert_allclose(exact_solution(kernel, 4, Y), Y / lam)
        assert relative_l2_error(phi, Y / lam, Y / lam, ico4.areas) < tol

    def test_fast_matches_direct(self, ico4):
        Y = real_spherical_harmonic(4, 3, ico4.centers)
        f = ScalarField.on_grid(ico4, Y)
        a, b = solve_greens(f), solve_greens(f, config=DIRECT)
        assert relative_l2_error(a, b, b, ico4.areas) < 1e-5


class TestInitialConditions:
    def test_rh_equator_value(self):
        p = lonlat_to_xyz(np.array([0.0, 37.0, 200.0]), np.zeros(3))
        # sin(lat) = 0 on the equator
        np.testing.assert_allclose(rossby_haurwitz_vorticity(p), 0.0, atol=1e-14)

    def test_rh_pole_value(self):
        assert rossby_haurwitz_vorticity(np.array([[0.0, 0.0, 1.0]]))[0] == pytest.approx(2 * math.pi / 7)

    def test_rh_antisymmetric_on_cubed_sphere(self):
        g = build_grid("cubed_sphere", 4)
        c = np.asarray(g.centers)
        mirror = c * [1, 1, -1]
        d = np.linalg.norm(c[:, None] - mirror[None], axis=2)
        j = d.argmin(axis=1)
        assert d[np.arange(len(c)), j].max() < 1e-14
        z = rossby_haurwitz_vorticity(c)
        assert np.abs(z + z[j]).max() < 1e-12

    def test_gaussian_total_vorticity(self):
        g = build_grid("icosahedral", 5)
        z = gaussian_vortex_vorticity(g.centers)
        assert abs(np.sum(z * g.areas)) < 2e-3 * np.abs(z).max() * 4 * math.pi

    def test_gaussian_peak_above_equator(self):
        g = build_grid("icosahedral", 4)
        z = gaussian_vortex_vorticity(g.centers)
        assert g.centers[z.argmax(), 2] > 0

    def test_unknown_kind(self, ico3):
        with pytest.raises(ConfigurationError):
            bve_initial("kelvin_wave", ico3)

    def test_tracer_starts_as_z(self, ico3):
        s = bve_initial("rh", ico3)
        np.testing.assert_array_equal(s.tracer, ico3.centers[:, 2])
        assert s.time == 0.0


class TestVelocity:
    def test_zero_vorticity(self, ico3):
        assert np.all(bve_velocity(ico3.centers, np.zeros(len(ico3)), ico3.areas) == 0)

    def test_solid_body_rotation(self):
        # zeta = c z is a degree-1 field, so the flow is rigid rotation with
        # angular speed c / 2 about the z axis
        g = build_grid("icosahedral", 6)
        c = 3.0
        v = bve_velocity(g.centers, c * g.centers[:, 2], g.areas)
        ref = 0.5 * c * np.stack([-g.centers[:, 1], g.centers[:, 0], np.zeros(len(g))], axis=1)
        m = np.linalg.norm(ref, axis=1) > 0.05
        cos = np.einsum("ij,ij->i", v[m], ref[m]) / np.linalg.norm(v[m], axis=1) / np.linalg.norm(ref[m], axis=1)
        assert cos.min() > 0.99
        assert relative_l2_error(v, ref, ref, g.areas) < 1e-2

    def test_fast_matches_direct(self):
        g = build_grid("icosahedral", 5)
        z = rossby_haurwitz_vorticity(g.centers)
        a = bve_velocity(g.centers, z, g.areas)
        b = bve_velocity(g.centers, z, g.areas, DIRECT)
        assert relative_l2_error(a, b, b, g.areas) < 1e-5


class TestBve:
    def test_zero_vorticity_stays_put(self, ico3):
        s = BveState(ico3.centers, np.zeros(len(ico3)), ico3.areas, omega=0.0)
        out = bve_step(s, config=BveConfig(omega=0.0))
        np.testing.assert_allclose(out.positions, s.positions, atol=1e-15)
        np.testing.assert_allclose(out.zeta, 0.0, atol=1e-12)
        assert out.time == pytest.approx(0.01)

    def test_absolute_vorticity_conserved_in_step(self, ico3):
        s = bve_initial("gaussian", ico3)
        out = rk4_advance(s, 0.01)
        assert np.abs(out.absolute_vorticity - s.absolute_vorticity).max() < 1e-8
        assert np.abs(np.linalg.norm(out.positions, axis=1) - 1).max() < 1e-14
        assert not np.allclose(out.positions, s.positions)

    def test_rk4_matches_rigid_rotation(self):
        # zeta = c z gives rotation at rate c/2; compare one RK4 step with the exact map
        g = build_grid("icosahedral", 5)
        c, dt = 2.0, 0.05
        s = BveState(g.centers, c * g.centers[:, 2], g.areas, omega=0.0)
        out = rk4_advance(s, dt, BveConfig(omega=0.0, sum_config=DIRECT))
        a = 0.5 * c * dt
        R = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
        # limited by the level-5 velocity error, not by RK4
        assert np.abs(out.positions - g.centers @ R.T).max() < 1e-2 * a

    def test_remesh_restores_grid(self, ico3):
        s = bve_initial("rh", ico3)
        out = bve_step(s)
        np.testing.assert_array_equal(out.positions, ico3.centers)

    def test_no_remesh_keeps_particles(self, ico3):
        s = bve_initial("rh", ico3)
        out = bve_step(s, config=BveConfig(remesh=False))
        assert not np.array_equal(out.positions, ico3.centers)

    def test_run_callback(self, ico3):
        seen = []
        out = bve_run(bve_initial("rh", ico3), 3, BveConfig(), lambda k, st: seen.append((k, st.time)))
        assert [k for k, _ in seen] == [1, 2, 3]
        assert out.time == pytest.approx(0.03)

    def test_dt_positive(self, ico3):
        with pytest.raises(ConfigurationError):
            rk4_advance(bve_initial("rh", ico3), 0.0)


class TestRemesh:
    @pytest.mark.parametrize("scheme", ["spline", "lsq"])
    def test_reproduces_quadratics_locally(self, rng, scheme):
        src = random_unit(rng, 4000)
        dst = build_grid("icosahedral", 3).centers
        f = lambda p: 1.0 + p[:, 0] - 2 * p[:, 1] * p[:, 2]  # noqa: E731
        got = remesh_values(src, f(src), dst, scheme=scheme)
        assert np.abs(got - f(dst)).max() < 5e-3

    def test_spline_interpolates_at_sources(self, ico3):
        vals = np.sin(3 * ico3.centers[:, 0]) + ico3.centers[:, 2]
        got = remesh_values(ico3.centers, vals, ico3.centers)
        assert np.abs(got - vals).max() < 1e-10

    def test_multichannel(self, rng, ico3):
        src = random_unit(rng, 500)
        vals = rng.standard_normal((500, 2))
        both = remesh_values(src, vals, ico3.centers)
        np.testing.assert_allclose(both[:, 1], remesh_values(src, vals[:, 1], ico3.centers), atol=1e-13)

    def test_errors(self, rng):
        src = random_unit(rng, 50)
        with pytest.raises(ConfigurationError):
            remesh_values(src, np.ones(50), src, scheme="cubic")
        with pytest.raises(ConfigurationError):
            remesh_values(src, np.ones(50), src, power=2)
        with pytest.raises(DimensionMismatchError):
            remesh_values(src, np.ones(49), src)
        with pytest.raises(ConfigurationError):
            remesh_values(src[:5], np.ones(5), src)

    def test_remesh_recovers_zeta(self, ico3):
        s = bve_initial("rh", ico3)
        out = remesh(s)
        np.testing.assert_allclose(out.zeta, s.zeta, atol=1e-9)
        np.testing.assert_allclose(out.tracer, s.tracer, atol=1e-12)


class TestSal:
    def test_zero_ssh(self, ico3):
        assert np.all(sal_potential(ScalarField.on_grid(ico3, np.zeros(len(ico3)))) == 0)

    def test_missing_areas(self, ico3):
        f = ScalarField(ico3.centers, np.full(len(ico3), np.nan), np.ones(len(ico3)))
        with pytest.raises(InputFormatError):
            sal_potential(f)

    def test_degree_six_matches_direct(self):
        g = build_grid("icosahedral", 5)
        eta = real_spherical_harmonic(2, 1, g.centers)
        f = ScalarField.on_grid(g, eta)
        a = sal_potential(f, config=TraversalConfig(degree=6))
        b = sal_potential(f, config=DIRECT)
        assert relative_l2_error(a, b, b, g.areas) < 1e-5

    def test_harmonic_is_eigenfunction(self):
        # Y_2^1 is scaled by the degree-2 multiplier of the fitted series.  The
        # kernel is 1/r singular and the self term is dropped, so the midpoint
        # rule converges at O(h): the error halves per level.
        errs = []
        for lev in (3, 4, 5):
            g = build_grid("icosahedral", lev)
            eta = real_spherical_harmonic(2, 1, g.centers)
            out = sal_potential(ScalarField.on_grid(g, eta), config=DIRECT)
            ref = sal_eigenvalue(2) * eta
            errs.append(relative_l2_error(out, ref, ref, g.areas))
        assert errs[-1] < 0.2
        for e0, e1 in zip(errs, errs[1:]):
            assert 1.7 < e0 / e1 < 2.1

    def test_norm_ratio_band(self):
        g = build_grid("icosahedral", 4)
        eta = synthetic_ssh(g.centers)
        out = sal_potential(ScalarField.on_grid(g, eta), SalParams(rho_ratio=0.18579))
        r = math.sqrt(np.sum(out**2 * g.areas) / np.sum(eta**2 * g.areas))
        assert 0.03 <= r <= 0.3

    def test_direct_sum_sal_kernel(self, ico3):
        eta = ico3.centers[:, 0]
        out = sal_potential(ScalarField.on_grid(ico3, eta), config=DIRECT)
        np.testing.assert_array_equal(out, direct_sum(ico3, ico3, eta * ico3.areas, "sal"))
