"""Telegrapher line segments: chain (ABCD) matrices and segment admittances."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigInvalid, DomainViolation, NumericalFailure, SingularBlock

SYM_RTOL = 1e-12
COND_LIMIT = 1e12
EXPM_RESIDUAL_TOL = 1e-8


def _sym_matrix(name, M, n):
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M * np.eye(n)
    if M.shape != (n, n):
        raise ConfigInvalid(name, f"expected {n}x{n}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigInvalid(name, "non-finite entries")
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() > SYM_RTOL * scale:
        raise ConfigInvalid(name, "matrix is not symmetric")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class LineParameters:
    """Per-unit-length R (ohm/m), L (H/m), G (S/m), C (F/m) of an n-conductor line."""

    R: np.ndarray
    L: np.ndarray
    G: np.ndarray
    C: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        n = L.shape[0]
        mats = {k: _sym_matrix(f"line.{k}", getattr(self, k), n) for k in "RLGC"}
        for k, strict in (("L", True), ("C", True), ("R", False), ("G", False)):
            M = mats[k]
            ev = np.linalg.eigvalsh(M)
            floor = 1e-12 * max(np.abs(ev).max(), np.finfo(float).tiny)
            if strict and ev.min() <= 0:
                raise ConfigInvalid(f"line.{k}", "must be positive definite")
            if not strict and ev.min() < -floor:
                raise ConfigInvalid(f"line.{k}", "must be positive semidefinite")
        for k, M in mats.items():
            M.setflags(write=False)
            object.__setattr__(self, k, M)
        object.__setattr__(self, "n", n)

    @classmethod
    def three_phase(cls, R, L_S, L_M, C_K, C_E, G=0.0):
        """Symmetric 3-phase line: mutual inductance L_M, coupling capacitance C_K, earth capacitance C_E."""
        ones = np.ones((3, 3))
        Lm = L_M * ones + (L_S - L_M) * np.eye(3)
        Cm = -C_K * ones + (C_E + 3 * C_K) * np.eye(3)
        return cls(R=R * np.eye(3), L=Lm, G=G * np.eye(3), C=Cm)

    @classmethod
    def case_study(cls):
        return cls.three_phase(0.32e-3, 299.85e-9, 59.97e-9, 0.33e-9, 0.033e-9)


@dataclass(frozen=True)
class AbcdMatrix:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    s: complex
    d: float

    @property
    def matrix(self):
        return np.block([[self.A, self.B], [self.C, self.D]])


@dataclass(frozen=True)
class SegmentAdmittance:
    """Upsilon = [[Y1, Y2], [Y3, Y4]] with Y4 = Y1 and Y3 = Y2 (same objects)."""

    Y1: np.ndarray
    Y2: np.ndarray
    s: complex
    d: float
    cond: float

    @property
    def Y3(self):
        return self.Y2

    @property
    def Y4(self):
        return self.Y1

    @property
    def matrix(self):
        return np.block([[self.Y1, self.Y2], [self.Y3, self.Y4]])


def telegrapher_generator(params, s):
    n = params.n
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    M[:n, n:] = params.L * s + params.R
    M[n:, :n] = params.C * s + params.G
    return M


def _balanced_generators(params, s):
    """Generators scaled by diag(z, 1) similarity so both blocks have comparable norm."""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    n = params.n
    Z = params.L[None] * s[:, None, None] + params.R[None]
    Yp = params.C[None] * s[:, None, None] + params.G[None]
    nz = np.abs(Z).sum(axis=1).max(axis=1)
    ny = np.abs(Yp).sum(axis=1).max(axis=1)
    z = np.where((nz > 0) & (ny > 0), np.sqrt(nz / np.where(ny > 0, ny, 1.0)), 1.0)
    M = np.zeros((s.size, 2 * n, 2 * n), dtype=complex)
    M[:, :n, n:] = Z / z[:, None, None]
    M[:, n:, :n] = Yp * z[:, None, None]
    return M, z


def _flip(X):
    """J X J with J = diag(I, -I): the chain matrix of the reversed length."""
    n = X.shape[-1] // 2
    Y = X.copy()
    Y[..., :n, n:] *= -1
    Y[..., n:, :n] *= -1
    return Y


def _unbalance(Xb, z):
    n = Xb.shape[-1] // 2
    X = Xb.copy()
    X[:, :n, n:] *= z[:, None, None]
    X[:, n:, :n] /= z[:, None, None]
    return X


def abcd_stack(params, s, d, check=True):
    """Chain matrices for every complex frequency in ``s`` at one length ``d``; shape (K, 2n, 2n)."""
    d = float(d)
    if not d >= 0:
        raise DomainViolation(f"segment length must be >= 0, got {d}")
    M, z = _balanced_generators(params, s)
    try:
        Xb = kernels.expm_batch(d * M)
    except FloatingPointError as exc:
        raise NumericalFailure(str(exc)) from exc
    if check:
        _residual_check(Xb)
    return _unbalance(Xb, z)


def _residual_check(Xb):
    # Xi(d) Xi(-d) = I, and Xi(-d) = J Xi(d) J
    m = Xb.shape[-1]
    R = Xb @ _flip(Xb) - np.eye(m)
    nx = np.abs(Xb).sum(axis=-2).max(axis=-1)
    res = np.abs(R).sum(axis=-2).max(axis=-1) / np.maximum(nx * nx, 1.0)
    bad = ~(res <= EXPM_RESIDUAL_TOL)
    if bad.any():
        worst = res[bad].max() if np.isfinite(res[bad]).any() else float("nan")
        raise NumericalFailure(f"matrix exponential residual {worst:.3g} exceeds tolerance")


def abcd_matrix(params, s, d):
    X = abcd_stack(params, [s], d)[0]
    n = params.n
    return AbcdMatrix(X[:n, :n], X[:n, n:], X[n:, :n], X[n:, n:], complex(s), float(d))


def segment_blocks(X, n):
    """(D B^-1, -B^-1, cond1(B)) from a single chain matrix."""
    B = X[:n, n:]
    D = X[n:, n:]
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        return None, None, np.inf
    c = np.linalg.norm(B, 1) * np.linalg.norm(Binv, 1)
    if not np.isfinite(c):
        c = np.inf
    return D @ Binv, -Binv, c


def segment_admittance(params, s, d, cond_limit=COND_LIMIT):
    if not d > 0:
        raise SingularBlock(f"segment admittance undefined at d={d}", np.inf)
    X = abcd_stack(params, [s], d)[0]
    Y1, Y2, c = segment_blocks(X, params.n)
    if not c <= cond_limit:
        raise SingularBlock(f"B block condition number {c:.3g} at s={s}, d={d}", c)
    return SegmentAdmittance(Y1, Y2, complex(s), float(d), float(c))


def alpha_abscissa(params):
    lam = {k: np.linalg.eigvalsh(getattr(params, k)) for k in "RLGC"}
    ratios = [
        lam["G"].min() / lam["C"].max(),
        lam["G"].min() / lam["C"].min(),
        lam["R"].min() / lam["L"].max(),
        lam["R"].min() / lam["L"].min(),
    ]
    return float(-min(ratios)) + 0.0


def modal_slowness(params):
    """Largest reciprocal propagation speed sqrt(eig(L C)) of the lossless line, s/m."""
    lam = np.linalg.eigvals(params.L @ params.C).real
    return float(np.sqrt(lam.max()))


def growth_diagnostic(params, s_values, d_values):
    """Spectral norm of the segment admittance over a (s, d) grid.

    Returns a dict with the per-abscissa maxima so callers can inspect the
    trend with Re(s); singular samples are counted, not raised.
    """
    s_values = np.asarray(s_values, dtype=complex)
    norms = np.full((s_values.size, len(d_values)), np.nan)
    singular = 0
    for j, d in enumerate(d_values):
        X = abcd_stack(params, s_values, d)
        for k in range(s_values.size):
            Y1, Y2, c = segment_blocks(X[k], params.n)
            if c > COND_LIMIT:
                singular += 1
                continue
            norms[k, j] = np.linalg.norm(np.block([[Y1, Y2], [Y2, Y1]]), 2)
    by_re = {}
    for re in np.unique(s_values.real):
        sel = s_values.real == re
        by_re[float(re)] = float(np.nanmax(norms[sel]))
    return {
        "max_norm": float(np.nanmax(norms)),
        "finite": bool(np.all(np.isfinite(norms[~np.isnan(norms)]))),
        "singular_samples": singular,
        "max_norm_by_abscissa": by_re,
        "norms": norms,
    }
