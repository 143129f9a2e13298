"""Euler scheme fidelity, reproducibility and the increments contract."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from cheybsde.cheyette import CheyetteParams, y_closed_form
from cheybsde.curve import bundled_curve
from cheybsde.simulate import (
    OffGridError,
    PathBatch,
    RngSpec,
    TimeGrid,
    gaussian_increments,
    simulate_paths,
)

KAPPA = -0.02
ETA = 0.0065


@pytest.fixture(scope="module")
def params():
    return CheyetteParams.constant(3, KAPPA, ETA, bundled_curve())


class TestTimeGrid:
    def test_spacing(self):
        grid = TimeGrid(5.0, 500)
        assert grid.dt == pytest.approx(0.01)
        assert len(grid.times) == 501
        assert grid.times[0] == 0.0
        assert grid.times[-1] == 5.0

    def test_index_of_grid_points(self):
        grid = TimeGrid(5.0, 500)
        for t, k in [(0.0, 0), (1.0, 100), (2.0, 200), (5.0, 500)]:
            assert grid.index_of(t) == k

    def test_off_grid_rejected_not_snapped(self):
        grid = TimeGrid(5.0, 500)
        with pytest.raises(OffGridError):
            grid.index_of(1.005)
        with pytest.raises(OffGridError):
            grid.index_of(5.01)

    def test_subgrid(self):
        grid = TimeGrid(5.0, 500)
        sub = grid.subgrid(1.0)
        assert sub.n_steps == 100
        assert sub.dt == pytest.approx(grid.dt)

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 10)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0)


class TestGaussianIncrements:
    def test_deterministic_under_seed(self):
        a = gaussian_increments(RngSpec(123), 8, 50, 3)
        b = gaussian_increments(RngSpec(123), 8, 50, 3)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = gaussian_increments(RngSpec(123), 4, 10, 2)
        b = gaussian_increments(RngSpec(124), 4, 10, 2)
        assert not np.array_equal(a, b)

    def test_moments_of_large_sample(self):
        # 4 standard error bounds on mean and variance of 1e6 draws.
        z = gaussian_increments(RngSpec(7), 1000, 500, 2).reshape(-1)
        n = z.size
        assert n == 10**6
        assert abs(z.mean()) < 4.0 / np.sqrt(n)
        var = z.var(ddof=1)
        assert abs(var - 1.0) < 4.0 * np.sqrt(2.0 / (n - 1))

    def test_streams_independent_of_batch_split(self):
        together = gaussian_increments(RngSpec(9), 10, 20, 3)
        first = gaussian_increments(RngSpec(9), 6, 20, 3)
        rest = gaussian_increments(RngSpec(9).shifted(6), 4, 20, 3)
        np.testing.assert_array_equal(together, np.concatenate([first, rest], axis=0))


class TestSimulatePaths:
    def test_initial_conditions(self, params):
        batch = simulate_paths(params, TimeGrid(1.0, 100), 16, RngSpec(0))
        np.testing.assert_array_equal(batch.x[:, 0, :], 0.0)
        np.testing.assert_array_equal(batch.y[:, 0, :], 0.0)

    def test_single_euler_step_from_zero(self, params):
        # With dW forced to zero the first step leaves X at 0 and moves Y by eta^2 dt.
        grid = TimeGrid(0.01, 1)
        batch = simulate_paths(params, grid, 1, RngSpec(0))
        x1 = batch.x[0, 1] - ETA * batch.dw[0, 0]  # subtract the noise contribution
        np.testing.assert_allclose(x1, 0.0, atol=1e-18)
        np.testing.assert_allclose(batch.y[0, 1], ETA**2 * 0.01, rtol=1e-14)
        assert batch.y[0, 1, 0] == pytest.approx(4.225e-7, rel=1e-12)

    def test_zero_volatility_keeps_factors_at_zero(self):
        p = CheyetteParams.constant(3, KAPPA, 0.0, bundled_curve())
        batch = simulate_paths(p, TimeGrid(1.0, 100), 5, RngSpec(1))
        np.testing.assert_array_equal(batch.x, 0.0)
        np.testing.assert_array_equal(batch.y, 0.0)

    def test_euler_y_matches_closed_form(self, params):
        batch = simulate_paths(params, TimeGrid(1.0, 100), 1, RngSpec(2))
        closed = y_closed_form(params, 1.0)
        np.testing.assert_allclose(batch.y[0, -1], closed, atol=5e-8)

    def test_y_identical_across_batch_and_non_negative(self, params):
        batch = simulate_paths(params, TimeGrid(2.0, 200), 32, RngSpec(3))
        assert np.all(batch.y >= 0.0)
        for j in range(1, batch.m_paths):
            np.testing.assert_array_equal(batch.y[j], batch.y[0])

    def test_bit_identical_under_seed(self, params):
        a = simulate_paths(params, TimeGrid(1.0, 50), 12, RngSpec(42))
        b = simulate_paths(params, TimeGrid(1.0, 50), 12, RngSpec(42))
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.dw, b.dw)

    def test_chunking_bit_stable(self, params):
        full = simulate_paths(params, TimeGrid(1.0, 50), 10, RngSpec(5))
        head = simulate_paths(params, TimeGrid(1.0, 50), 7, RngSpec(5))
        tail = simulate_paths(params, TimeGrid(1.0, 50), 3, RngSpec(5).shifted(7))
        np.testing.assert_array_equal(full.x, np.concatenate([head.x, tail.x], axis=0))

    def test_rejects_empty_batch(self, params):
        with pytest.raises(ValueError):
            simulate_paths(params, TimeGrid(1.0, 10), 0, RngSpec(0))


N_ORACLE_PATHS = 100_000


@pytest.fixture(scope="module")
def terminal(params):
    """One-year-horizon X snapshot over many paths, simulated in chunks."""
    grid = TimeGrid(1.0, 100)
    xs = []
    done = 0
    while done < N_ORACLE_PATHS:
        chunk = min(20_000, N_ORACLE_PATHS - done)
        batch = simulate_paths(params, grid, chunk, RngSpec(11).shifted(done))
        xs.append(batch.x[:, -1, 0])
        done += chunk
    return np.concatenate(xs)


class TestSchemeAccuracy:
    """Statistical and convergence checks against independent oracles."""

    def test_mean_matches_ode_oracle(self, params, terminal):
        # Oracle: fine Runge-Kutta solution of dx/dt = y(t) - kappa x.
        sol = solve_ivp(
            lambda t, x: y_closed_form(params, t)[0] - KAPPA * x,
            (0.0, 1.0), [0.0], rtol=1e-11, atol=1e-14, dense_output=True,
        )
        expected = sol.y[0, -1]
        stderr = terminal.std(ddof=1) / np.sqrt(len(terminal))
        assert abs(terminal.mean() - expected) < 4.0 * stderr

    def test_variance_matches_integral_oracle(self, params, terminal):
        # Var X(1) equals the same integral as Y(1) under constant parameters.
        expected = y_closed_form(params, 1.0)[0]
        n = len(terminal)
        var = terminal.var(ddof=1)
        stderr = var * np.sqrt(2.0 / (n - 1))
        assert abs(var - expected) < 4.0 * stderr

    def test_first_order_convergence_of_y(self, params):
        errors = []
        for dt in (0.04, 0.02, 0.01):
            grid = TimeGrid(1.0, int(round(1.0 / dt)))
            batch = simulate_paths(params, grid, 1, RngSpec(0))
            errors.append(abs(batch.y[0, -1, 0] - y_closed_form(params, 1.0)[0]))
        # halving dt should roughly halve the error
        assert errors[1] / errors[0] == pytest.approx(0.5, abs=0.1)
        assert errors[2] / errors[1] == pytest.approx(0.5, abs=0.1)


class TestCsvDump:
    def test_schema_and_values(self, params, tmp_path):
        batch = simulate_paths(params, TimeGrid(0.02, 2), 2, RngSpec(8))
        target = tmp_path / "paths.csv"
        batch.to_csv(target)
        lines = target.read_text().strip().split("\n")
        assert lines[0] == "path_id,k,t,x_1,x_2,x_3,y_1,y_2,y_3"
        assert len(lines) == 1 + 2 * 3  # two paths, three grid points each
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "0"
        assert float(first[2]) == 0.0
        assert all(float(v) == 0.0 for v in first[3:])
