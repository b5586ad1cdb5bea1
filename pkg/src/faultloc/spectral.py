"""Exponentially windowed FFT transforms along the line Re(s) = beta."""
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolated, ConjugateSymmetryViolated, GridMismatch

SYMMETRY_TOL = 1e-6


def next_pow2(n):
    return 1 << max(0, int(n - 1).bit_length())


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform frequency grid for records of ``n_samples`` points at spacing ``dt``.

    Only the non-negative bins are stored; real signals have conjugate
    symmetric spectra so the negative half is implied.
    """

    beta: float
    dt: float
    n_fft: int
    n_samples: int
    omega_band: float

    def __post_init__(self):
        if self.n_fft & (self.n_fft - 1) or self.n_fft < 2:
            raise GridMismatch(f"n_fft must be a power of two, got {self.n_fft}")
        if self.n_samples > self.n_fft:
            raise GridMismatch("record longer than the transform length")
        if not self.dt > 0:
            raise GridMismatch("dt must be positive")
        if not 0 < self.omega_band <= np.pi / self.dt * (1 + 1e-12):
            raise GridMismatch(f"omega_band {self.omega_band} outside (0, pi/dt]")

    @classmethod
    def for_record(cls, n_samples, dt, beta=0.01, omega_band=None, alpha=0.0, pad=1):
        if not beta > max(0.0, alpha):
            raise AssumptionViolated(f"beta={beta} must exceed max(0, alpha={alpha})")
        if omega_band is None:
            omega_band = min(2 * np.pi * 1e4, np.pi / dt)
        return cls(float(beta), float(dt), next_pow2(int(n_samples) * pad), int(n_samples),
                   float(omega_band))

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1

    @property
    def d_omega(self):
        return 2 * np.pi / (self.n_fft * self.dt)

    @property
    def omega(self):
        return self.d_omega * np.arange(self.n_bins)

    @property
    def s(self):
        return self.beta + 1j * self.omega

    @property
    def omega_full(self):
        return 2 * np.pi * np.fft.fftfreq(self.n_fft, self.dt)

    @property
    def t(self):
        return self.dt * np.arange(self.n_fft)

    @property
    def band_bins(self):
        return int(np.floor(self.omega_band / self.d_omega * (1 + 1e-12)))

    def same_as(self, other):
        return (self.n_fft == other.n_fft and np.isclose(self.dt, other.dt, rtol=1e-12)
                and self.beta == other.beta)


def forward_transform(x, grid):
    """X(beta + j w_k) = dt * sum_k x[k] exp(-beta t_k) exp(-j w_k t_k), non-negative bins only.

    ``x`` has shape (samples,) or (samples, channels).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] > grid.n_fft:
        raise GridMismatch(f"{x.shape[0]} samples exceed the grid length {grid.n_fft}")
    t = grid.dt * np.arange(x.shape[0])
    w = np.exp(-grid.beta * t)
    xw = x * (w if x.ndim == 1 else w[:, None])
    return grid.dt * np.fft.rfft(xw, n=grid.n_fft, axis=0)


def windowed_inverse(X, grid):
    """exp(-beta t) f(t) on the full transform length; ``X`` holds the non-negative bins."""
    X = np.asarray(X)
    if X.shape[0] != grid.n_bins:
        raise GridMismatch(f"expected {grid.n_bins} bins, got {X.shape[0]}")
    return np.fft.irfft(X, n=grid.n_fft, axis=0) / grid.dt


def inverse_transform(X, grid, n_out=None, return_residual=False):
    """f(t_k) = exp(beta t_k) / (N dt) * sum_w X(beta + j w) exp(j w t_k).

    ``X`` may hold the non-negative bins (the real-signal path) or all
    ``n_fft`` bins in FFT order, in which case conjugate symmetry is checked.
    """
    X = np.asarray(X)
    n_out = grid.n_fft if n_out is None else int(n_out)
    residual = 0.0
    if X.shape[0] == grid.n_fft and grid.n_fft != grid.n_bins:
        mirror = np.conj(np.roll(X[::-1], 1, axis=0))
        scale = max(np.abs(X).max(), np.finfo(float).tiny)
        asym = np.abs(X - mirror).max() / scale
        if asym > SYMMETRY_TOL:
            raise ConjugateSymmetryViolated(f"spectrum asymmetry {asym:.3g} exceeds {SYMMETRY_TOL}")
        full = np.fft.ifft(X, axis=0) / grid.dt
        re = np.abs(full.real).max()
        residual = float(np.abs(full.imag).max() / re) if re > 0 else 0.0
        fw = full.real
    elif X.shape[0] == grid.n_bins:
        fw = windowed_inverse(X, grid)
    else:
        raise GridMismatch(f"spectrum has {X.shape[0]} bins; grid expects {grid.n_bins} or {grid.n_fft}")
    t = grid.dt * np.arange(n_out)
    g = np.exp(grid.beta * t)
    f = fw[:n_out] * (g if fw.ndim == 1 else g[:, None])
    return (f, residual) if return_residual else f


def band_integral(values, grid, omega_band=None):
    """Integral over [-omega_band, omega_band] of an even function sampled on the non-negative bins."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.n_bins:
        raise GridMismatch(f"expected {grid.n_bins} bins, got {values.shape[0]}")
    wb = grid.omega_band if omega_band is None else omega_band
    if wb > np.pi / grid.dt * (1 + 1e-12):
        raise GridMismatch("band limit beyond Nyquist")
    kb = min(int(np.floor(wb / grid.d_omega * (1 + 1e-12))), grid.n_bins - 1)
    inner = values[1:kb + 1].sum(axis=0)
    total = values[0] + 2.0 * inner
    if kb == grid.n_bins - 1:
        total = total - values[kb]  # the Nyquist bin appears once in the two-sided sum
    return grid.d_omega * total
