"""Four-port admittance of a line with a fault tap at distance d from the sensors."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AssumptionViolated, DomainViolation, SingularBlock
from .line_model import COND_LIMIT, _flip, abcd_stack


@dataclass(frozen=True)
class PortDims:
    n1: int
    n2: int
    n3: int
    n4: int

    def __post_init__(self):
        for k in ("n1", "n2", "n3", "n4"):
            v = getattr(self, k)
            if int(v) != v or v < 1:
                raise ValueError(f"{k} must be a positive integer, got {v}")

    @property
    def N(self):
        return self.n1 + self.n2 + self.n3 + self.n4

    @property
    def offsets(self):
        return (0, self.n1, self.n1 + self.n2, self.n1 + self.n2 + self.n3)

    @property
    def n_known(self):
        return self.n1 + self.n2 + 2 * self.n3

    def as_tuple(self):
        return (self.n1, self.n2, self.n3, self.n4)


@dataclass(frozen=True)
class FaultPhaseMask:
    p: tuple

    def __post_init__(self):
        p = tuple(int(x) for x in self.p)
        if not p or any(x not in (0, 1) for x in p) or sum(p) == 0:
            raise ValueError(f"mask entries must be 0/1 with at least one 1, got {self.p}")
        object.__setattr__(self, "p", p)

    @property
    def matrix(self):
        return np.diag(np.array(self.p, dtype=float))

    @property
    def vector(self):
        return np.array(self.p, dtype=float)

    @classmethod
    def phases(cls, n, faulted):
        return cls(tuple(1 if k in faulted else 0 for k in range(n)))


@dataclass(frozen=True)
class YbarSubmatrix:
    matrix: np.ndarray
    sigma_min: float


def ybar(Y, dims):
    o1, o2, o3, o4 = dims.offsets
    rows = np.r_[o2:o3, o3:o4]
    cols = np.r_[o2:o3, o4:dims.N]
    Yb = np.asarray(Y)[np.ix_(rows, cols)]
    sv = np.linalg.svd(Yb, compute_uv=False)
    p = Yb.shape[1]
    smin = float(sv[p - 1]) if sv.size >= p else 0.0
    return YbarSubmatrix(Yb, smin)


class NetworkAdmittance:
    """Y(s; d) for the source / dummy / sensor / fault-port partition.

    ``d`` is measured from the sensor end (port 3); the source-side segment
    has length ``total_length - d``.
    """

    def __init__(self, params, total_length, mask, delta, cond_limit=COND_LIMIT, memo=False):
        if not 0 < delta < total_length / 2:
            raise DomainViolation(f"need 0 < delta < L/2, got delta={delta}, L={total_length}")
        if len(mask.p) != params.n:
            raise ValueError("mask length does not match conductor count")
        self.params = params
        self.total_length = float(total_length)
        self.mask = mask
        self.delta = float(delta)
        self.cond_limit = float(cond_limit)
        n = params.n
        self.dims = PortDims(n, 1, n, n)
        self._memo = {} if memo else None

    @property
    def search_domain(self):
        return (self.delta, self.total_length - self.delta)

    def check_distance(self, d):
        lo, hi = self.search_domain
        if not lo <= d <= hi:
            raise DomainViolation(f"d={d} outside search domain [{lo}, {hi}]")

    def __call__(self, s, d):
        return self.evaluate(s, d)

    def evaluate(self, s, d):
        self.check_distance(d)
        key = (complex(s), float(d))
        if self._memo is not None and key in self._memo:
            return self._memo[key]
        Y, cond, ok = self.batch([s], d)
        if not ok[0]:
            raise SingularBlock(f"B block condition number {cond[0]:.3g} at s={s}, d={d}", cond[0])
        if self._memo is not None:
            self._memo[key] = Y[0]
        return Y[0]

    def batch(self, s, d):
        """Evaluate on many frequencies at once; returns (Y, cond, ok)."""
        self.check_distance(d)
        up = abcd_stack(self.params, s, self.total_length - d)
        dn = abcd_stack(self.params, s, d)
        return self.from_abcd(up, dn)

    def from_abcd(self, xi_up, xi_dn):
        return kernels.admittance_from_abcd(xi_up, xi_dn, self.mask.vector, self.cond_limit)

    def stream(self, s, ds, refresh=32):
        """Yield ``(index, d, xi_up, xi_dn)`` for ascending candidate distances.

        Consecutive equal increments reuse one cached exponential through the
        semigroup property; other increments, and every ``refresh`` steps,
        recompute from scratch.
        """
        s = np.asarray(s, dtype=complex)
        order = np.argsort(ds, kind="stable")
        L = self.total_length
        step_len, step, step_inv = None, None, None
        xi_dn = xi_up = None
        prev = None
        since = 0
        for i in order:
            d = float(ds[i])
            self.check_distance(d)
            inc = None if prev is None else d - prev
            if inc is not None and since < refresh and step_len is not None \
                    and abs(inc - step_len) <= 1e-9 * max(step_len, 1.0):
                xi_dn = xi_dn @ step
                xi_up = xi_up @ step_inv
                since += 1
            else:
                if inc is not None and inc > 0 and since < refresh:
                    step_len = inc
                    step = abcd_stack(self.params, s, inc)
                    step_inv = _flip(step)
                xi_dn = abcd_stack(self.params, s, d)
                xi_up = abcd_stack(self.params, s, L - d)
                since = 0
            prev = d
            yield int(i), d, xi_up, xi_dn


def compose_faulted_line(params, L_total, mask, delta, **kw):
    return NetworkAdmittance(params, L_total, mask, delta, **kw)


@dataclass
class GrowthReport:
    max_norm: float
    min_sigma: float
    triangle_ok: bool
    n_samples: int
    sigma_bound_ok: bool

    def as_dict(self):
        return dict(self.__dict__)


def growth_diagnostics(net, s_values, d_samples):
    """Norm and rank diagnostics of Y(s; d) over frequency samples and distances."""
    s_values = np.asarray(s_values, dtype=complex)
    n = net.params.n
    max_norm, min_sigma = 0.0, np.inf
    tri_ok, bound_ok = True, True
    count = 0
    for d in d_samples:
        up = abcd_stack(net.params, s_values, net.total_length - d)
        dn = abcd_stack(net.params, s_values, d)
        Y, cond, ok = net.from_abcd(up, dn)
        for k in np.flatnonzero(ok):
            Yk = Y[k]
            nY = np.linalg.norm(Yk, 2)
            u_dn = _segment_norm(dn[k], n)
            u_up = _segment_norm(up[k], n)
            if not nY <= (u_dn + u_up + 1.0) * (1 + 1e-12):
                tri_ok = False
            yb = ybar(Yk, net.dims)
            # sigma_min(Ybar)^-1 <= max(1, ||B_d||) for this partition
            Bn = np.linalg.norm(dn[k][:n, n:], 2)
            if yb.sigma_min > 0 and 1.0 / yb.sigma_min > max(1.0, Bn) * (1 + 1e-9):
                bound_ok = False
            max_norm = max(max_norm, nY)
            min_sigma = min(min_sigma, yb.sigma_min)
            count += 1
    if count and min_sigma == 0.0:
        raise AssumptionViolated("Ybar loses full column rank on the sampled grid")
    return GrowthReport(max_norm, float(min_sigma), tri_ok, count, bound_ok)


def _segment_norm(X, n):
    B = X[:n, n:]
    D = X[n:, n:]
    Bi = np.linalg.inv(B)
    Y1 = D @ Bi
    return np.linalg.norm(np.block([[Y1, -Bi], [-Bi, Y1]]), 2)
