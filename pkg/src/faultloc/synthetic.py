"""Port recordings that satisfy the distributed line model exactly on the transform grid.

The source drives a smooth burst starting at ``t_f`` into a line whose fault
branch is connected from t = 0, so every signal is zero before ``t_f`` and
the fault port behaves as a switch closing at ``t_f``.  Signals are built bin
by bin from the full (all-phase) nodal equations, then brought back to the
time domain on the same grid the localiser uses.
"""
import math

import numpy as np

from . import kernels
from .line_model import abcd_stack
from .records import GroundTruth, PortRecord
from .spectral import SpectralGrid, forward_transform, inverse_transform


def smooth_burst(t, t0, width):
    """C-infinity bump supported on (t0, t0 + width), peak value 1."""
    x = (np.asarray(t, dtype=float) - t0) / width
    out = np.zeros_like(x)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    out[inside] = np.exp(4.0 - 1.0 / (xi * (1.0 - xi)))
    return out


def burst_source(t, n, t0, width, freq, amplitude):
    t = np.asarray(t, dtype=float)
    env = smooth_burst(t, t0, width)
    ph = 2 * np.pi * np.arange(n) / n
    return amplitude * env[:, None] * np.sin(2 * np.pi * freq * (t[:, None] - t0) + ph)


def exact_record(params, total_length, ell, mask, R_f, R3=1e3, dt=2e-6, n_samples=1 << 16,
                 t_f=0.02, width=2e-3, freq=1e3, amplitude=1e3, beta=0.01):
    """Return ``(record, truth)`` for a fault at distance ``ell`` from the sensor end.

    ``n_samples`` must be a power of two so that the record fills the
    transform length and re-transforming it reproduces the constructed bins.
    """
    n = params.n
    grid = SpectralGrid.for_record(n_samples, dt, beta, math.pi / dt)
    if grid.n_fft != n_samples:
        raise ValueError("n_samples must be a power of two")
    s = grid.s
    t = grid.t
    v1 = burst_source(t, n, t_f, width, freq, amplitude)
    V1 = forward_transform(v1, grid)
    up = abcd_stack(params, s, total_length - ell)
    dn = abcd_stack(params, s, ell)
    Y, cond, ok = kernels.admittance_from_abcd(up, dn, np.ones(n), np.inf)
    o1, o3, o4 = 0, n + 1, 2 * n + 1
    blk = lambda r, c: Y[:, r:r + n, c:c + n]
    P = np.diag(np.asarray(mask, dtype=float))
    I = np.eye(n)
    A = np.zeros((s.size, 2 * n, 2 * n), dtype=complex)
    A[:, :n, :n] = blk(o3, o3) + I / R3
    A[:, :n, n:] = blk(o3, o4)
    A[:, n:, :n] = blk(o4, o3)
    A[:, n:, n:] = blk(o4, o4) + P / R_f
    rhs = -np.concatenate([np.einsum("kab,kb->ka", blk(o3, o1), V1),
                           np.einsum("kab,kb->ka", blk(o4, o1), V1)], axis=1)
    X = np.linalg.solve(A, rhs[..., None])[..., 0]
    V3, V4 = X[:, :n], X[:, n:]
    back = lambda F: inverse_transform(F, grid)
    v3 = back(V3)
    v4 = back(V4)
    vf = v4 @ P
    record = PortRecord(dt, v1, np.zeros((n_samples, 1)), v3, -v3 / R3)
    truth = GroundTruth(dt, v4, -vf / R_f, vf,
                        meta={"t_f": t_f, "ell": ell, "R_f": R_f, "max_cond": float(cond.max())})
    return record, truth
