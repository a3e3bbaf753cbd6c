import numpy as np
import pytest

from geokan import refsolve as rs
from geokan.autodiff import NumericError


class TestRK45:
    def test_exponential_growth(self):
        ts, ys = rs.integrate_rk45(lambda t, y: y, [1.0], (0.0, 1.0),
                                   rtol=1e-8, atol=1e-12,
                                   t_eval=[0.0, 0.5, 1.0])
        assert np.allclose(ys[:, 0], np.exp(ts), rtol=1e-7)

    def test_lorenz_fixed_point_is_stationary(self):
        beta, rho = 8.0 / 3.0, 15.0
        eq = np.array([np.sqrt(beta * (rho - 1)),
                       np.sqrt(beta * (rho - 1)), rho - 1])
        _, ys = rs.integrate_rk45(rs.lorenz_rhs(), eq, (0.0, 5.0),
                                  rtol=1e-10, atol=1e-12,
                                  t_eval=[5.0])
        assert np.allclose(ys[-1], eq, atol=1e-8)

    def test_lorenz_self_convergence(self):
        f = rs.lorenz_rhs()
        _, a = rs.integrate_rk45(f, [1.0, 1.0, 1.0], (0.0, 20.0),
                                 rtol=1e-8, atol=1e-10, t_eval=[20.0])
        _, b = rs.integrate_rk45(f, [1.0, 1.0, 1.0], (0.0, 20.0),
                                 rtol=1e-10, atol=1e-12, t_eval=[20.0])
        assert np.abs(a - b).max() <= 1e-5

    def test_fixed_step_order_five(self):
        errs = []
        for h in (0.2, 0.1, 0.05):
            _, ys = rs.integrate_rk45(lambda t, y: -y, [1.0],
                                      (0.0, 2.0), fixed_step=h,
                                      t_eval=[2.0])
            errs.append(abs(ys[-1, 0] - np.exp(-2.0)))
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert (orders > 4.3).all()

    def test_dense_output_between_steps(self):
        ts = np.linspace(0.0, 2.0, 41)
        _, ys = rs.integrate_rk45(lambda t, y: np.array([np.cos(t)]),
                                  [0.0], (0.0, 2.0), fixed_step=0.5,
                                  t_eval=ts)
        assert np.allclose(ys[:, 0], np.sin(ts), atol=1e-7)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            rs.integrate_rk45(lambda t, y: y, [1.0], (1.0, 0.0))
        with pytest.raises(ValueError):
            rs.integrate_rk45(lambda t, y: y, [1.0], (0.0, 1.0), rtol=0)

    def test_stiff_blowup_raises(self):
        with pytest.raises(NumericError):
            rs.integrate_rk45(lambda t, y: y * y, [1.0], (0.0, 2.0),
                              rtol=1e-8, atol=1e-10, t_eval=[2.0])


class TestAllenCahn:
    def test_constant_state_is_fixed_point(self):
        fld = rs.solve_allen_cahn(1, nx=64, nt=64,
                                  ic=lambda x: np.ones_like(x),
                                  bc=(1.0, 1.0))
        assert np.abs(fld.values - 1.0).max() <= 1e-12

    def test_case1_self_convergence(self):
        coarse = rs.solve_allen_cahn(1, nx=257, nt=501)
        fine = rs.solve_allen_cahn(1, nx=513, nt=1001)
        diff = np.abs(coarse.values - fine.values[::2, ::2]).max()
        assert diff <= 1e-3

    def test_maximum_principle(self):
        for case in (1, 2):
            fld = rs.solve_allen_cahn(case, nx=128, nt=256)
            assert fld.values.min() >= -1.0 - 1e-6
            assert fld.values.max() <= 1.0 + 1e-6

    def test_boundary_rows(self):
        fld = rs.solve_allen_cahn(2, nx=96, nt=96)
        assert np.allclose(fld.values[0, 1:], -1.0)
        assert np.allclose(fld.values[-1, 1:], 1.0)
        x = fld.x
        assert np.allclose(fld.values[:, 0], x ** 2 * np.cos(np.pi * x))


class TestBurgers:
    def test_zero_stays_zero(self):
        x = np.linspace(0, 1, 64)
        _, ys = rs.integrate_rk45(
            lambda t, u: np.zeros_like(u), np.zeros(64), (0.0, 1.0),
            rtol=1e-8, atol=1e-10, t_eval=[1.0])
        assert np.all(ys == 0)

    def test_amplitude_decays(self):
        fld = rs.solve_burgers(nx=129, nt=101)
        amps = np.abs(fld.values).max(axis=0)
        assert (np.diff(amps) <= 1e-10).all()

    def test_self_convergence(self):
        coarse = rs.solve_burgers(nx=129, nt=101)
        fine = rs.solve_burgers(nx=257, nt=101)
        assert np.abs(coarse.values - fine.values[::2]).max() <= 1e-3


class TestHelmholtz:
    def test_homogeneous_is_plane_wave(self):
        prof = rs.PermittivityProfile([(0.0, 1.0, 1.0)])
        fld = rs.solve_helmholtz_tmm(prof, lam=0.25, n=512)
        k = 2 * np.pi / 0.25
        assert np.allclose(fld.values, np.exp(1j * k * fld.grid),
                           atol=1e-9)
        assert np.allclose(np.abs(fld.values), 1.0, atol=1e-10)

    def test_lossless_energy_conservation(self):
        prof = rs.PermittivityProfile([(0.0, 0.3, 1.0),
                                       (0.3, 0.7, 2.25),
                                       (0.7, 1.0, 1.0)])
        r, t = rs.scattering_coefficients(prof, lam=1.0 / 15)
        assert abs(r + t - 1.0) <= 1e-12

    def test_residual_oracle(self):
        n = 10_001
        fld = rs.solve_helmholtz_tmm(lam=1.0, n=n)
        z, u = fld.grid, fld.values
        h = z[1] - z[0]
        k2 = rs.default_profile().eps_at(z) * (2 * np.pi) ** 2
        res = (u[:-2] - 2 * u[1:-1] + u[2:]) / h ** 2 + \
            k2[1:-1] * u[1:-1]
        interior = (np.abs(z[1:-1] - 0.3) > 2 * h) & \
            (np.abs(z[1:-1] - 0.7) > 2 * h)
        assert np.abs(res[interior]).max() <= 1e-6 * np.abs(u).max()

    def test_matches_independent_fd_solver(self):
        tmm = rs.solve_helmholtz_tmm(lam=1.0 / 10, n=2048)
        fd = rs.solve_helmholtz_fd(lam=1.0 / 10, n=32_768)
        on_grid = fd.values[::16]
        assert on_grid.size == 2048
        rel = np.linalg.norm(tmm.values - on_grid) / \
            np.linalg.norm(tmm.values)
        assert rel <= 1e-4

    def test_boundary_conditions_exact(self):
        fld = rs.solve_helmholtz_tmm(lam=1.0 / 15, n=4097)
        z, u = fld.grid, fld.values
        h = z[1] - z[0]
        k = 2 * np.pi * 15
        # one-sided fourth-order derivative estimates at the endpoints
        c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
        uz0 = (c @ u[:5]) / h
        uz1 = -(c @ u[-1:-6:-1]) / h
        assert abs(uz0 + 1j * k * u[0] - 2j * k) <= 1e-4 * k
        assert abs(uz1 - 1j * k * u[-1]) <= 1e-4 * k

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            rs.PermittivityProfile([(0.0, 0.5, 1.0)])
        with pytest.raises(ValueError):
            rs.PermittivityProfile([(0.0, 0.5, 1.0), (0.6, 1.0, 1.0)])
        with pytest.raises(ValueError):
            rs.PermittivityProfile([(0.0, 1.0, -1.0)])


class TestCache:
    def test_roundtrip(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GEOKAN_CACHE", str(tmp_path))
        fld = rs.Field2D(np.linspace(0, 1, 4), np.linspace(0, 1, 3),
                         np.arange(12.0).reshape(4, 3), {"problem": "x"})
        rs.save_field(fld, "unit")
        back = rs.load_field("unit")
        assert np.array_equal(back.values, fld.values)
        assert np.array_equal(back.x, fld.x)
        assert back.meta == {"problem": "x"}

    def test_reference_registry_rejects_unknown(self):
        with pytest.raises(ValueError):
            rs.reference_field("nonsense")

    def test_field_validation(self):
        with pytest.raises(ValueError):
            rs.Field1D(np.array([1.0, 0.0]), np.zeros(2))
        with pytest.raises(ValueError):
            rs.Field2D(np.linspace(0, 1, 4), np.linspace(0, 1, 3),
                       np.zeros((3, 4)))
