import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spde_sync.noise import (
    NoiseRealization,
    hermite,
    hermite_values,
    renorm_constant,
    stationary_sample,
)
from spde_sync.torus import Field, TorusGrid, lp_norm


def small_noise(grid16, seed=42, dt=0.01, t0=0.0, t1=10.0, truncation=5):
    return NoiseRealization(seed=seed, grid=grid16, dt=dt, t0=t0, t1=t1,
                            truncation=truncation)


class TestIncrement:
    def test_replay_is_bit_exact(self, grid16):
        noise = small_noise(grid16)
        a = noise.increment(17)
        b = small_noise(grid16).increment(17)
        assert np.array_equal(a.spectral, b.spectral)

    def test_different_steps_differ(self, grid16):
        noise = small_noise(grid16)
        assert not np.array_equal(noise.increment(3).values,
                                  noise.increment(4).values)

    def test_different_seeds_differ(self, grid16):
        a = small_noise(grid16, seed=1).increment(0)
        b = small_noise(grid16, seed=2).increment(0)
        assert not np.array_equal(a.values, b.values)

    def test_window_enforced(self, grid16):
        noise = small_noise(grid16, t0=0.0, t1=1.0)  # steps [0, 100)
        noise.increment(0)
        noise.increment(99)
        with pytest.raises(ValueError):
            noise.increment(100)
        with pytest.raises(ValueError):
            noise.increment(-1)

    def test_negative_window_for_pullback(self, grid16):
        noise = small_noise(grid16, t0=-2.0, t1=0.0)
        inc = noise.increment(-200)
        assert np.all(np.isfinite(inc.values))
        again = small_noise(grid16, t0=-2.0, t1=0.0).increment(-200)
        assert np.array_equal(inc.spectral, again.spectral)

    def test_window_must_align_with_dt(self, grid16):
        with pytest.raises(ValueError):
            NoiseRealization(seed=1, grid=grid16, dt=0.01, t0=0.0, t1=0.505,
                             truncation=5)

    def test_truncation_zeroes_high_modes(self, grid16):
        noise = small_noise(grid16, truncation=3)
        spec = noise.increment(0).spectral
        k = np.fft.fftfreq(grid16.N, 1 / grid16.N).astype(int)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        outside = (np.abs(kx) > 3) | (np.abs(ky) > 3)
        assert np.all(spec[outside] == 0.0)

    def test_increment_is_real(self, grid16):
        noise = small_noise(grid16)
        inc = noise.increment(5)
        spec_back = np.fft.fftn(inc.values)
        assert np.max(np.abs(spec_back - inc.spectral)) <= \
            1e-10 * np.max(np.abs(inc.spectral))

    def test_per_mode_variance(self, grid16):
        # E|c_k|^2 = dt / L^d per retained mode, 5% tolerance over 1e4 draws
        noise = small_noise(grid16, dt=0.01, t1=100.0, truncation=3)
        n_draws = 10_000
        coeffs = np.empty((n_draws, 7, 7), dtype=np.complex128)
        rows = np.arange(-3, 4) % grid16.N
        sel = np.ix_(rows, rows)
        scale = grid16.N**2
        for i in range(n_draws):
            coeffs[i] = noise.increment(i).spectral[sel] / scale
        var = np.mean(np.abs(coeffs) ** 2, axis=0)
        target = 0.01 / grid16.volume
        assert np.all(np.abs(var - target) <= 0.05 * target)

    def test_mean_within_three_standard_errors(self, grid16):
        noise = small_noise(grid16, dt=0.01, t1=100.0, truncation=3)
        n_draws = 10_000
        rows = np.arange(-3, 4) % grid16.N
        sel = np.ix_(rows, rows)
        acc = np.zeros((7, 7), dtype=np.complex128)
        for i in range(n_draws):
            acc += noise.increment(i).spectral[sel]
        mean = acc / (n_draws * grid16.N**2)
        per_mode_std = math.sqrt(0.01 / grid16.volume)
        se = per_mode_std / math.sqrt(n_draws)
        assert np.all(np.abs(mean.real) <= 3 * se)
        assert np.all(np.abs(mean.imag) <= 3 * se)

    def test_disjoint_windows_uncorrelated(self, grid16):
        # sample covariance between increments of disjoint step ranges
        noise = small_noise(grid16, dt=0.01, t1=200.0, truncation=2)
        n_draws = 10_000
        a = np.empty(n_draws)
        b = np.empty(n_draws)
        for i in range(n_draws):
            a[i] = noise.increment(2 * i).values[0, 0]
            b[i] = noise.increment(2 * i + 1).values[0, 0]
        cov = np.mean(a * b) - a.mean() * b.mean()
        se = a.std() * b.std() / math.sqrt(n_draws)
        assert abs(cov) <= 3 * se

    def test_parseval(self, grid16):
        # E ||dW||_2^2 = dt * (#retained modes), 5% tolerance
        noise = small_noise(grid16, dt=0.01, t1=100.0, truncation=5)
        n_draws = 4000
        total = 0.0
        for i in range(n_draws):
            total += lp_norm(noise.increment(i), 2) ** 2
        expected = 0.01 * (2 * 5 + 1) ** 2
        assert total / n_draws == pytest.approx(expected, rel=0.05)

    def test_truncation_bounds_checked(self, grid16):
        with pytest.raises(ValueError):
            small_noise(grid16, truncation=8)  # > N/2 - 1
        with pytest.raises(ValueError):
            small_noise(grid16, truncation=0)


class TestRenormConstant:
    def test_exact_small_truncation(self):
        # eight modes with |k|_inf = 1 on L = 2*pi: mu in {1, 2}, mass 1
        grid = TorusGrid(L=2 * math.pi, N=16)
        rc = renorm_constant(grid, 1, 1.0)
        expected = (4 / (2 * 2) + 4 / (2 * 3)) / (4 * math.pi**2)
        assert rc.value == pytest.approx(expected, rel=1e-12)
        assert rc.truncation == 1

    def test_monotone_in_truncation(self, grid64):
        values = [renorm_constant(grid64, k).value for k in (1, 2, 4, 8, 16)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_log_growth(self, grid64):
        # d = 2: C_K ~ c log K; successive doublings add a stable constant
        values = {k: renorm_constant(grid64, k).value
                  for k in (16, 32, 64, 128)}
        gains = [(values[2 * k] - values[k]) / math.log(2.0)
                 for k in (16, 32, 64)]
        assert all(g > 0 for g in gains)
        assert max(gains) / min(gains) < 1.1

    def test_validation(self, grid16):
        with pytest.raises(ValueError):
            renorm_constant(grid16, 0)
        with pytest.raises(ValueError):
            renorm_constant(grid16, 4, mass=0.0)


class TestHermite:
    def test_cubic(self):
        assert hermite_values(3, np.array(2.0), 1.0) == pytest.approx(2.0)

    def test_quadratic(self):
        assert hermite_values(2, np.array(0.0), 1.0) == pytest.approx(-1.0)

    @settings(max_examples=30, deadline=None)
    @given(k=st.integers(0, 6), u=st.floats(-4, 4))
    def test_zero_variance_gives_monomials(self, k, u):
        assert hermite_values(k, np.array(u), 0.0) == pytest.approx(
            u**k, rel=1e-12, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(u=st.floats(-3, 3), c=st.floats(0.01, 4.0))
    def test_known_polynomials(self, u, c):
        arr = np.array(u)
        assert hermite_values(2, arr, c) == pytest.approx(u * u - c, rel=1e-12,
                                                          abs=1e-12)
        assert hermite_values(3, arr, c) == pytest.approx(u**3 - 3 * c * u,
                                                          rel=1e-9, abs=1e-9)
        assert hermite_values(4, arr, c) == pytest.approx(
            u**4 - 6 * c * u * u + 3 * c * c, rel=1e-9, abs=1e-9)

    def test_field_wrapper(self, grid16):
        f = Field.constant(grid16, 2.0)
        out = hermite(3, f, 1.0)
        assert np.allclose(out.values, 2.0)

    def test_rejects_negative_order(self, grid16):
        with pytest.raises(ValueError):
            hermite(-1, Field.zero(grid16), 1.0)


class TestWickProperty:
    def test_stationary_sample_matches_counterterm(self):
        # E[spatial mean of H_2(Z, C_K)] = 0 within 3 standard errors
        grid = TorusGrid(L=2 * math.pi, N=16)
        truncation, mass = 5, 1.0
        c = renorm_constant(grid, truncation, mass).value
        n_draws = 10_000
        samples = np.empty(n_draws)
        for i in range(n_draws):
            z = stationary_sample(grid, truncation, mass, seed=2718, index=i)
            samples[i] = np.mean(hermite_values(2, z.values, c))
        se = samples.std(ddof=1) / math.sqrt(n_draws)
        assert abs(samples.mean()) <= 3 * se

    def test_stationary_sample_deterministic(self, grid16):
        a = stationary_sample(grid16, 4, 1.0, seed=7, index=3)
        b = stationary_sample(grid16, 4, 1.0, seed=7, index=3)
        assert np.array_equal(a.values, b.values)

    def test_zero_mode_excluded(self, grid16):
        z = stationary_sample(grid16, 4, 1.0, seed=9, index=0)
        assert z.mean == pytest.approx(0.0, abs=1e-14)
