"""Seeded, replayable, spectrally truncated space-time white noise.

An increment over a time step of length dt is the real field

    dW(x) = sum_{|k|_inf <= K} c_k exp(2*pi*i k.x / L),

with Hermitian-symmetric complex Gaussian coefficients satisfying
E|c_k|^2 = dt / L^d for every retained mode (dt/L^d per real degree of
freedom), which is the projection of space-time white noise onto the
truncated mode range: E ||dW||_2^2 = dt * (number of retained modes).
The zero mode is retained (white noise includes k = 0).

Randomness comes from a counter-based generator (Philox).  The increment for
global step index n draws from the counter block n * 2^128, so

* the same (seed, step) always reproduces the increment bit-exactly, and
* increments over disjoint step ranges use disjoint counter ranges and are
  therefore independent, which is the discrete stand-in for independence of
  the noise over disjoint time windows.

Step indices may be negative (pullback runs start in the past); they are
mapped to counters through their two's-complement 64-bit image, which is
injective on [-2^63, 2^63).

The renormalization constant for truncation level K is the stationary
variance of the truncated linear field with reference mass m,

    C_K = (1/L^d) sum_{0 < |k|_inf <= K} 1 / (2 (mu_k + m)),

which grows like log K in d = 2.  The zero mode is excluded and the
difference absorbed into the free finite constant of the renormalization;
the reference mass (default 1) shifts C_K by a finite constant only.
:func:`stationary_sample` draws from exactly that Gaussian field, so the
second Wick power H_2(Z, C_K) = Z^2 - C_K has mean zero - the operational
meaning of the constant, exercised by the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .torus import Field, TorusGrid


_COUNTER_STRIDE = 1 << 128  # Philox counter blocks reserved per step index


def _philox_normals(seed: int, counter_block: int, shape) -> np.ndarray:
    key = int(seed) & (2**64 - 1)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter_block))
    return gen.standard_normal(shape)


def _signed_to_counter(index: int) -> int:
    if not (-(2**63) <= index < 2**63):
        raise ValueError(f"step index out of 64-bit range: {index}")
    return (index & (2**64 - 1)) * _COUNTER_STRIDE


def _hermitian_block(w: np.ndarray) -> np.ndarray:
    """Project an iid complex block on [-K..K]^d onto Hermitian symmetry.

    For w with iid standard-normal real and imaginary parts, the projection
    (w + conj(w reversed))/2 has exactly unit per-mode variance E|c_k|^2 = 1
    (the k = 0 entry comes out real with variance 1).
    """
    flipped = w[tuple(slice(None, None, -1) for _ in range(w.ndim))]
    return 0.5 * (w + np.conj(flipped))


def _scatter_block(grid: TorusGrid, block: np.ndarray, K: int) -> np.ndarray:
    """Embed a centered [-K..K]^d coefficient block into the FFT layout."""
    spectral = np.zeros(grid.shape, dtype=np.complex128)
    rows = np.arange(-K, K + 1) % grid.N
    spectral[np.ix_(*(rows,) * grid.d)] = block
    return spectral


@dataclass(frozen=True)
class NoiseRealization:
    """One replayable noise path: seed, grid, step size, window, truncation.

    Step n covers the time interval [n*dt, (n+1)*dt); valid indices are those
    whose interval lies inside [t0, t1).  The object is immutable and
    increment() is pure, so coupled trajectories can share one realization
    and independent ensembles use distinct seeds.
    """

    seed: int
    grid: TorusGrid
    dt: float
    t0: float
    t1: float
    truncation: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t1 <= self.t0:
            raise ValueError(f"empty window [{self.t0}, {self.t1})")
        if self.truncation < 1 or self.truncation > self.grid.N // 2 - 1:
            raise ValueError(
                f"truncation must be in [1, N/2-1], got {self.truncation}"
            )
        for name in ("t0", "t1"):
            value = getattr(self, name)
            steps = value / self.dt
            if abs(steps - round(steps)) > 1e-6:
                raise ValueError(f"{name}={value} is not a multiple of dt={self.dt}")

    def step_range(self) -> tuple[int, int]:
        """Half-open range of valid global step indices."""
        return int(round(self.t0 / self.dt)), int(round(self.t1 / self.dt))

    def increment(self, step: int) -> Field:
        """White-noise increment for global step index `step` (deterministic)."""
        n0, n1 = self.step_range()
        if not (n0 <= step < n1):
            raise ValueError(
                f"step {step} outside noise window [{n0}, {n1}) "
                f"(t in [{self.t0}, {self.t1}))"
            )
        K = self.truncation
        side = 2 * K + 1
        w = _philox_normals(self.seed, _signed_to_counter(int(step)),
                            (2,) + (side,) * self.grid.d)
        block = _hermitian_block(w[0] + 1j * w[1])
        scale = math.sqrt(self.dt / self.grid.volume)
        # numpy's unnormalized-forward convention carries a factor N^d
        spectral = _scatter_block(self.grid, block, K) * (
            scale * self.grid.N**self.grid.d
        )
        return Field.from_spectral(self.grid, spectral)


@dataclass(frozen=True)
class RenormConstant:
    """Wick counterterm C_K for a truncation level and reference mass."""

    value: float
    truncation: int
    mass: float


def renorm_constant(grid: TorusGrid, truncation: int, mass: float = 1.0
                    ) -> RenormConstant:
    """Mode-sum counterterm (1/L^d) sum_{0<|k|<=K} 1/(2(mu_k + m)).

    The sum only involves the mode ball, so truncation levels beyond what a
    particular grid resolves are allowed here (useful for growth studies);
    the solver separately enforces truncation <= N/2 - 1.
    """
    if truncation < 1:
        raise ValueError(f"truncation must be >= 1, got {truncation}")
    if mass <= 0:
        raise ValueError(f"reference mass must be positive, got {mass}")
    k = np.arange(-truncation, truncation + 1, dtype=np.float64)
    kk = np.meshgrid(*(k,) * grid.d, indexing="ij")
    k2 = sum(a**2 for a in kk)
    mu = (2.0 * math.pi / grid.L) ** 2 * k2
    terms = 1.0 / (2.0 * (mu + mass))
    center = (truncation,) * grid.d
    terms[center] = 0.0  # zero mode excluded
    return RenormConstant(value=float(terms.sum() / grid.volume),
                          truncation=truncation, mass=mass)


def stationary_sample(grid: TorusGrid, truncation: int, mass: float,
                      seed: int, index: int = 0) -> Field:
    """Sample the stationary truncated linear field matching renorm_constant.

    Modes 0 < |k|_inf <= K carry independent Gaussians with per-mode variance
    1/(2(mu_k + m) L^d); the zero mode is zero, mirroring its exclusion from
    C_K.  E[Z(x)^2] = C_K at every grid point.
    """
    K = truncation
    side = 2 * K + 1
    w = _philox_normals(seed, _signed_to_counter(int(index)),
                        (2,) + (side,) * grid.d)
    block = _hermitian_block(w[0] + 1j * w[1])
    k = np.arange(-K, K + 1, dtype=np.float64)
    kk = np.meshgrid(*(k,) * grid.d, indexing="ij")
    mu = (2.0 * math.pi / grid.L) ** 2 * sum(a**2 for a in kk)
    std = np.sqrt(1.0 / (2.0 * (mu + mass) * grid.volume))
    std[(K,) * grid.d] = 0.0
    spectral = _scatter_block(grid, block * std, K) * grid.N**grid.d
    return Field.from_spectral(grid, spectral)


def hermite_values(k: int, u: np.ndarray, c: float) -> np.ndarray:
    """Pointwise Hermite polynomial H_k(u, c) via the three-term recursion.

    H_0 = 1, H_1 = u, H_{k+1} = u H_k - k c H_{k-1}; H_3(u, c) = u^3 - 3cu.
    With c = 0 the recursion degenerates to plain monomials u^k.
    """
    if k < 0:
        raise ValueError(f"Hermite order must be >= 0, got {k}")
    u = np.asarray(u, dtype=np.float64)
    if k == 0:
        return np.ones_like(u)
    prev, cur = np.ones_like(u), u.copy()
    for j in range(1, k):
        prev, cur = cur, u * cur - j * c * prev
    return cur


def hermite(k: int, u: Field, c: float) -> Field:
    """Field-level wrapper of :func:`hermite_values`."""
    return Field.from_values(u.grid, hermite_values(k, u.values, c))
