"""Pseudoinverse estimates of the fault-port voltage and current."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericalFailure
from .network_model import PortDims, ybar

RANK_RTOL = 1e-10


def _dims(dims):
    return dims if isinstance(dims, PortDims) else PortDims(*dims)


@dataclass(frozen=True)
class PsiMatrix:
    matrix: np.ndarray
    sigma_min_ybar: float
    rank_ok: bool


def pinv(A):
    """Moore-Penrose pseudoinverse, singular values below max(m, n)*eps*smax dropped."""
    A = np.asarray(A, dtype=complex)
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s.size == 0:
        return np.zeros(A.shape[::-1], dtype=complex)
    tol = max(A.shape) * np.finfo(float).eps * s[0]
    keep = s > tol
    return (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T


def psi_operator(Y, dims):
    dims = _dims(dims)
    n1, n2, n3, n4 = dims.as_tuple()
    o1, o2, o3, o4 = dims.offsets
    Y = np.asarray(Y, dtype=complex)
    if Y.shape != (dims.N, dims.N):
        raise ValueError(f"Y must be {dims.N}x{dims.N}, got {Y.shape}")
    blk = lambda r, c: Y[r[0]:r[1], c[0]:c[1]]
    R1, R2, R3, R4 = (o1, o2), (o2, o3), (o3, o4), (o4, dims.N)
    yb = ybar(Y, dims)
    nin = dims.n_known
    I2, I3 = np.eye(n2), np.eye(n3)
    # right factor maps (v1, i2, v3, i3) to the known-signal residual
    right = np.zeros((n2 + n3, nin), dtype=complex)
    right[:n2, :n1] = blk(R2, R1)
    right[:n2, n1:n1 + n2] = -I2
    right[:n2, n1 + n2:n1 + n2 + n3] = blk(R2, R3)
    right[n2:, :n1] = blk(R3, R1)
    right[n2:, n1 + n2:n1 + n2 + n3] = blk(R3, R3)
    right[n2:, n1 + n2 + n3:] = -I3
    left = np.zeros((2 * n4, n2 + n4), dtype=complex)
    left[:n4, n2:] = np.eye(n4)
    left[n4:, :n2] = blk(R4, R2)
    left[n4:, n2:] = blk(R4, R4)
    first = np.zeros((2 * n4, nin), dtype=complex)
    first[n4:, :n1] = blk(R4, R1)
    first[n4:, n1 + n2:n1 + n2 + n3] = blk(R4, R3)
    psi = first - left @ pinv(yb.matrix) @ right
    rank_ok = yb.sigma_min > RANK_RTOL * np.linalg.norm(yb.matrix, 2)
    return PsiMatrix(psi, yb.sigma_min, bool(rank_ok))


def psi_norm_bound(Y, dims):
    dims = _dims(dims)
    smin = ybar(Y, dims).sigma_min
    nY = np.linalg.norm(np.asarray(Y, dtype=complex), 2)
    if smin == 0.0:
        return float("inf")
    return float(nY + (nY + 1.0) ** 2 / smin)


@dataclass
class FaultFrequencyEstimate:
    """Per-bin fault-port estimates; arrays have shape (bins, n4)."""

    V4: np.ndarray
    I4: np.ndarray
    d: float
    rank_ok: np.ndarray
    bin_ok: np.ndarray
    Vf: np.ndarray = None
    meta: dict = field(default_factory=dict)


def apply_psi_batch(Y, U, dims, ok=None):
    """Estimates for a stack of admittances; ``U`` has shape (bins, legs, n_known).

    Returns (est, rank_ok) where ``est`` has shape (bins, legs, 2*n4).
    Bins with ``ok`` false are zeroed.
    """
    dims = _dims(dims)
    est, smin, smax = kernels.psi_apply(Y, U, *dims.as_tuple())
    rank_ok = smin > RANK_RTOL * smax
    if ok is not None:
        est[~ok] = 0.0
        rank_ok = rank_ok & ok
    return est, rank_ok


def estimate_fault_ports(net, U, s, d):
    """Fault-port estimates at candidate distance ``d`` for known-signal spectra ``U`` (bins, n_known)."""
    U = np.asarray(U, dtype=complex)
    s = np.asarray(s, dtype=complex)
    if U.shape[0] != s.size:
        raise ValueError("U and s must have the same number of bins")
    Y, cond, ok = net.batch(s, d)
    if not ok.any():
        raise NumericalFailure(f"every frequency bin failed at d={d}")
    est, rank_ok = apply_psi_batch(Y, U[:, None, :], net.dims, ok)
    n4 = net.dims.n4
    return FaultFrequencyEstimate(
        V4=est[:, 0, :n4], I4=est[:, 0, n4:], d=float(d), rank_ok=rank_ok, bin_ok=ok,
        meta={"flagged_bins": int((~ok).sum()), "rank_deficient_bins": int((ok & ~rank_ok).sum()),
              "max_cond": float(np.max(cond))})


def impedance_values(phi, s, n):
    """Evaluate an impedance spec at the bins ``s``: scalar, constant matrix, or callable."""
    s = np.asarray(s, dtype=complex)
    if callable(phi):
        vals = np.asarray([phi(sk) for sk in s], dtype=complex)
        return vals.reshape(s.size, n, n)
    P = np.asarray(phi, dtype=complex)
    if P.ndim == 0:
        P = P * np.eye(n)
    return np.broadcast_to(P, (s.size, n, n))


def fault_voltage_known(phi, est, s):
    """Fill ``est.Vf`` with -Phi(s) I4."""
    n4 = est.I4.shape[1]
    P = impedance_values(phi, s, n4)
    est.Vf = -np.einsum("kab,kb->ka", P, est.I4)
    return est
