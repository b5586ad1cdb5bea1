"""Fault-time estimate, the two localisation costs, and the grid search over distance."""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolated, DomainViolation, GridMismatch, NumericalFailure
from .fault_estimator import apply_psi_batch, estimate_fault_ports, impedance_values
from .line_model import alpha_abscissa, modal_slowness
from .spectral import SpectralGrid, band_integral, windowed_inverse

ARGMIN_RTOL = 1e-12
STREAM_BUDGET = 1 << 30  # bytes of chain matrices held while streaming candidates

FLAG_THETA_ABOVE_BOUND = 1
FLAG_NO_ACTIVATION = 2
FLAG_BINS_SKIPPED = 4
FLAG_FAILED = 8


@dataclass
class LocaliserConfig:
    beta: float = 0.01
    omega_band: float = 2 * math.pi * 1e4
    kappa: float = 1e-3
    fault_time_bound: float = None
    prefix: float = 0.0
    activation_cutoff: float = 2 * math.pi * 2e3
    activation_order: int = 2
    tail_guard: float = None
    chunk: int = 16384

    @classmethod
    def from_run_config(cls, cfg):
        return cls(beta=cfg["localiser.beta"], omega_band=cfg["localiser.omega_band"],
                   kappa=cfg["localiser.kappa"], fault_time_bound=cfg.fault_time_bound,
                   prefix=cfg["localiser.prefix"],
                   activation_cutoff=cfg["localiser.activation_cutoff"],
                   tail_guard=cfg["localiser.tail_guard"])


@dataclass(frozen=True)
class FaultTimeEstimate:
    theta: float
    activation_threshold: float
    d: float = float("nan")


def activation_time(i4, dt, threshold, d=float("nan")):
    """First sample time at which the running integral of |i4| exceeds ``threshold * dt``.

    ``i4`` is un-windowed, shape (samples,) or (samples, channels).  Returns
    +inf when the threshold is never crossed.
    """
    i4 = np.asarray(i4, dtype=float)
    mag = np.abs(i4) if i4.ndim == 1 else np.sqrt((i4 * i4).sum(axis=1))
    run = np.cumsum(mag) * dt
    hit = np.flatnonzero(run > threshold * dt)
    theta = float(hit[0] * dt) if hit.size else math.inf
    return FaultTimeEstimate(theta, float(threshold), float(d))


def activation_filter(s, cutoff, order=2):
    """Causal low-pass (cutoff/(s + cutoff))**order; None or 0 disables it.

    Being causal it cannot move the onset of a signal earlier, so it only
    suppresses out-of-band model error ahead of the activation test.
    """
    s = np.asarray(s, dtype=complex)
    if not cutoff:
        return np.ones_like(s)
    return (cutoff / (s + cutoff)) ** int(order)


def _first_index(theta, dt, n):
    if math.isinf(theta):
        return n
    return min(n, max(0, int(math.ceil(theta / dt - 1e-9))))


def cost_known(vf, v4, theta, T, beta, dt):
    """Rectangle-rule J over samples with t <= T; ``vf``/``v4`` are windowed (times exp(-beta t))."""
    vf = np.atleast_2d(np.asarray(vf, dtype=float).T).T
    v4 = np.atleast_2d(np.asarray(v4, dtype=float).T).T
    n = min(vf.shape[0], int(math.floor(T / dt + 1e-9)) + 1)
    k = _first_index(theta, dt, n)
    w = np.exp(2 * beta * dt * np.arange(n))
    a = (vf[:k] ** 2).sum(axis=1) @ w[:k]
    e = vf[k:n] - v4[k:n]
    b = (e ** 2).sum(axis=1) @ w[k:n]
    return float((a + b) * dt)


def tilde_fault_voltage(v4, theta, grid, n_samples=None):
    """Spectrum of the windowed ``v4`` with samples before ``theta`` (and after the record) zeroed."""
    v4 = np.asarray(v4, dtype=float)
    n = v4.shape[0] if n_samples is None else min(int(n_samples), v4.shape[0])
    if n > grid.n_fft:
        raise GridMismatch("signal longer than the grid")
    k = _first_index(theta, grid.dt, n)
    x = np.zeros((grid.n_fft,) + v4.shape[1:])
    x[k:n] = v4[k:n]
    return grid.dt * np.fft.rfft(x, axis=0)


def cost_passive(I4, Vf, grid, omega_band=None):
    I4 = np.asarray(I4)
    Vf = np.asarray(Vf)
    if I4.shape != Vf.shape or I4.shape[0] != grid.n_bins:
        raise GridMismatch("spectra must share the grid")
    inner = np.conj(I4) * Vf
    if inner.ndim > 1:
        inner = inner.sum(axis=1)
    return float(band_integral(np.maximum(inner.real, 0.0), grid, omega_band))


def argmin_set(values, rtol=ARGMIN_RTOL):
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    if not ok.any():
        return []
    m = v[ok].min()
    lim = m + rtol * abs(m)
    return [int(i) for i in np.flatnonzero(ok & (v <= lim))]


def candidate_grid(domain, n_points=100, inject=()):
    lo, hi = domain
    d = np.linspace(lo, hi, int(n_points))
    extra = [x for x in inject if x is not None]
    for x in extra:
        if not lo <= x <= hi:
            raise DomainViolation(f"injected point {x} outside [{lo}, {hi}]")
    return np.unique(np.concatenate([d, np.asarray(extra, dtype=float)]))


def lebesgue_weights(d, domain):
    """Length of the part of ``domain`` closer to each (sorted, distinct) grid point than to any other."""
    d = np.asarray(d, dtype=float)
    lo, hi = domain
    mid = 0.5 * (d[1:] + d[:-1])
    edges = np.concatenate([[lo], mid, [hi]])
    return np.clip(np.diff(edges), 0.0, None)


@dataclass
class CostProfile:
    d: np.ndarray
    theta: np.ndarray
    J: np.ndarray
    Jt: np.ndarray
    flags: np.ndarray
    domain: tuple
    argmin_J: list = field(default_factory=list)
    argmin_Jt: list = field(default_factory=list)
    intersection: list = field(default_factory=list)
    reference: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def finalise(self):
        self.argmin_J = argmin_set(self.J) if np.isfinite(self.J).any() else []
        self.argmin_Jt = argmin_set(self.Jt) if np.isfinite(self.Jt).any() else []
        if self.argmin_J and self.argmin_Jt:
            self.intersection = sorted(set(self.argmin_J) & set(self.argmin_Jt))
        else:
            self.intersection = []
        return self

    def minimisers(self, which="J"):
        idx = self.argmin_J if which == "J" else self.argmin_Jt
        return [float(self.d[i]) for i in idx]

    def error(self, ell, which="J"):
        """Distance from ``ell`` to the farthest minimiser (ties count against the result)."""
        m = self.minimisers(which)
        return max(abs(x - ell) for x in m) if m else math.inf

    def sublevel_fraction(self, level=None):
        """Fraction of the domain where the passive cost does not exceed ``level``.

        ``level`` defaults to the passive cost at the reference (true location and time).
        """
        if level is None:
            level = self.reference.get("Jt_at_truth")
        if level is None or not np.isfinite(self.Jt).any():
            return math.nan
        w = lebesgue_weights(self.d, self.domain)
        sel = np.isfinite(self.Jt) & (self.Jt <= level)
        return float(w[sel].sum() / (self.domain[1] - self.domain[0]))


def default_tail_guard(net):
    """1.5 end-to-end transit times of the slowest mode.

    The fault-port estimate at time t needs sensor data up to roughly one
    transit time later, so the end of the record carries truncation junk.
    """
    return 1.5 * net.total_length * modal_slowness(net.params)


def _block_estimates(net, s, U, eval_d, cols, cfg):
    K, P = U.shape[0], U.shape[1]
    for idx, d, xi_up, xi_dn in net.stream(s, eval_d):
        est = np.empty((K, P, cols.size), dtype=complex)
        nbad = rank_def = 0
        for c0 in range(0, K, cfg.chunk):
            cs = slice(c0, min(K, c0 + cfg.chunk))
            Y, cond, ok = net.from_abcd(xi_up[cs], xi_dn[cs])
            e, rank_ok = apply_psi_batch(Y, U[cs], net.dims, ok)
            est[cs] = e[:, :, cols]
            nbad += int((~ok).sum())
            rank_def += int((ok & ~rank_ok).sum())
        yield int(idx), d, est, nbad, rank_def


def _candidate_estimates(net, s, eval_d, U, chan, cfg):
    """Yield ``(index, d, est, n_skipped, n_rank_deficient)`` per candidate.

    ``est`` has shape (bins, legs, 2 * len(chan)) holding the faulted-channel
    voltage then current spectra.  Short records stream candidates over all
    bins at once; long ones are split into frequency blocks and the
    estimates kept for every candidate, which bounds peak memory.
    """
    dims = net.dims
    n4 = dims.n4
    K, P = U.shape[0], U.shape[1]
    cols = np.concatenate([chan, n4 + chan])
    m = 2 * net.params.n
    per_bin = 6 * m * m * 16
    n_blocks = max(1, math.ceil(K * per_bin / STREAM_BUDGET))

    if n_blocks == 1:
        yield from _block_estimates(net, s, U, eval_d, cols, cfg)
        return
    G = len(eval_d)
    store = np.empty((G, K, P, cols.size), dtype=complex)
    counts = np.zeros((G, 2), dtype=np.int64)
    edges = np.linspace(0, K, n_blocks + 1).astype(int)
    for b in range(n_blocks):
        sl = slice(edges[b], edges[b + 1])
        for idx, _, est, nbad, rank_def in _block_estimates(net, s[sl], U[sl], eval_d, cols, cfg):
            store[idx, sl] = est
            counts[idx] += (nbad, rank_def)
    for idx in np.argsort(eval_d, kind="stable"):
        yield int(idx), float(eval_d[idx]), store[idx], int(counts[idx, 0]), int(counts[idx, 1])


def localise(net, record, phi=None, config=None, grid=None, reference=None, passive=True):
    return localise_many(net, [record], [phi], config, grid, [reference], passive)[0]


def localise_many(net, records, phis, config=None, grid=None, references=None, passive=True,
                  progress=None):
    """Evaluate both costs for several records sharing one sampling grid.

    The admittance and pseudoinverse work per bin and candidate is done once
    and applied to every record.  ``phis[j]`` is the known fault impedance of
    record ``j`` (scalar, matrix or callable of s) or None; ``references[j]``
    is an optional ``(ell, t_f)`` pair at which costs are also reported.
    """
    t_start = time.perf_counter()
    cfg = config or LocaliserConfig()
    P = len(records)
    if P == 0:
        return []
    phis = list(phis) if phis is not None else [None] * P
    references = list(references) if references is not None else [None] * P
    dt = records[0].dt
    N0 = records[0].n_samples
    for r in records:
        if r.n_samples != N0 or not np.isclose(r.dt, dt, rtol=1e-12):
            raise GridMismatch("records must share sample count and interval")
    n_pre = int(round(cfg.prefix / dt)) if cfg.prefix else 0
    if n_pre:
        records = [r.with_prefix(n_pre) for r in records]
    shift = n_pre * dt
    N = N0 + n_pre
    guard = default_tail_guard(net) if cfg.tail_guard is None else float(cfg.tail_guard)
    Ne = N - int(math.ceil(guard / dt - 1e-9))
    Tf = (0.75 * (N0 - 1) * dt if cfg.fault_time_bound is None else cfg.fault_time_bound) + shift
    if Ne < 2 or (Ne - 1) * dt <= Tf:
        raise AssumptionViolated(f"record too short: tail guard {guard:.3g} s leaves nothing after T_f")
    T = (Ne - 1) * dt
    alpha = alpha_abscissa(net.params) if hasattr(net, "params") else 0.0
    sg = SpectralGrid.for_record(N, dt, cfg.beta, min(cfg.omega_band, math.pi / dt), alpha)
    s = sg.s
    K = sg.n_bins
    dims = net.dims
    n4 = dims.n4
    mask = getattr(net, "mask", None)
    chan = np.flatnonzero(mask.vector) if mask is not None else np.arange(n4)
    nc = chan.size
    # known-signal spectra, (bins, legs, n_known)
    U = np.empty((K, P, dims.n_known), dtype=complex)
    tt = dt * np.arange(N)
    win = np.exp(-cfg.beta * tt)[:, None]
    for j, r in enumerate(records):
        U[:, j, :] = dt * np.fft.rfft(r.stacked() * win, n=sg.n_fft, axis=0)
    phi_vals = [None if p is None else impedance_values(p, s, n4)[:, chan][:, :, chan] for p in phis]

    if grid is None:
        grid = candidate_grid(net.search_domain, 100)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainViolation("empty candidate grid")
    extra = []
    for ref in references:
        if ref is not None and not np.any(np.isclose(grid, ref[0], rtol=0, atol=1e-9)):
            extra.append(float(ref[0]))
    eval_d = np.concatenate([grid, np.unique(extra)]) if extra else grid
    G = grid.size
    theta = np.full((P, G), np.nan)
    J = np.full((P, G), np.nan)
    Jt = np.full((P, G), np.nan)
    flags = np.zeros((P, G), dtype=np.int64)
    refs_out = [dict() for _ in range(P)]
    skipped_total = 0
    rank_def_total = 0
    tw = np.exp(cfg.beta * tt)
    Hact = activation_filter(s, cfg.activation_cutoff, cfg.activation_order)[:, None]
    done = 0
    cand = _candidate_estimates(net, s, eval_d, U, chan, cfg)
    for idx, d, est, nbad, rank_def in cand:
        skipped_total += nbad
        rank_def_total += rank_def
        in_grid = idx < G
        for j in range(P):
            if nbad == K:
                if in_grid:
                    flags[j, idx] |= FLAG_FAILED
                    J[j, idx] = Jt[j, idx] = math.inf
                continue
            V4 = est[:, j, :nc]
            I4 = est[:, j, nc:]
            v4w = windowed_inverse(V4, sg)[:Ne]
            i4 = windowed_inverse(I4 * Hact, sg)[:Ne] * tw[:Ne, None]
            mag = np.sqrt((i4 * i4).sum(axis=1))
            fte = activation_time(i4, dt, cfg.kappa * mag.max(), d)
            th = fte.theta
            fl = FLAG_BINS_SKIPPED if nbad else 0
            if math.isinf(th):
                fl |= FLAG_NO_ACTIVATION
            elif th > Tf:
                fl |= FLAG_THETA_ABOVE_BOUND
            th_used = min(th, Tf)
            evals = [(th_used, in_grid)]
            ref = references[j]
            if ref is not None and abs(d - ref[0]) <= 1e-9:
                evals.append((ref[1] + shift, "ref"))
                refs_out[j]["theta_hat_at_truth"] = th - shift
            vfw = None
            if phi_vals[j] is not None:
                Vf = -np.einsum("kab,kb->ka", phi_vals[j], I4)
                vfw = windowed_inverse(Vf, sg)[:Ne]
            if passive:
                # current spectrum of the guarded record only, to match the voltage side
                I4r = dt * np.fft.rfft(windowed_inverse(I4, sg)[:Ne], n=sg.n_fft, axis=0)
            for th_e, where in evals:
                Jv = cost_known(vfw, v4w, th_e, T, cfg.beta, dt) if vfw is not None else math.nan
                Jtv = math.nan
                if passive:
                    Vt = tilde_fault_voltage(v4w, th_e, sg, Ne)
                    Jtv = cost_passive(I4r, Vt, sg, sg.omega_band)
                if where == "ref":
                    refs_out[j]["J_at_truth"] = Jv
                    refs_out[j]["Jt_at_truth"] = Jtv
                elif where:
                    theta[j, idx] = th - shift
                    J[j, idx] = Jv
                    Jt[j, idx] = Jtv
                    flags[j, idx] = fl
        done += 1
        if progress is not None:
            progress(done, eval_d.size)
    if np.all(flags & FLAG_FAILED):
        raise AssumptionViolated("every candidate failed: no usable frequency bins")
    elapsed = time.perf_counter() - t_start
    out = []
    for j in range(P):
        prof = CostProfile(
            d=grid.copy(), theta=theta[j], J=J[j], Jt=Jt[j], flags=flags[j],
            domain=tuple(net.search_domain), reference=dict(refs_out[j]),
            meta={"beta": cfg.beta, "omega_band": sg.omega_band, "kappa": cfg.kappa,
                  "fault_time_bound": Tf - shift, "activation_cutoff": cfg.activation_cutoff,
                  "tail_guard": guard, "T_end": T - shift, "n_fft": sg.n_fft, "dt": dt,
                  "prefix": shift, "skipped_bins": skipped_total,
                  "rank_deficient_bins": rank_def_total, "runtime_s": elapsed,
                  "legs_in_batch": P})
        if references[j] is not None:
            prof.reference.update({"ell": float(references[j][0]), "t_f": float(references[j][1])})
        if phis[j] is None:
            prof.J[:] = np.nan
        if not passive:
            prof.Jt[:] = np.nan
        out.append(prof.finalise())
    return out


def cost_surface(net, record, thetas, grid, phi=None, config=None, passive=True):
    """Debug mode: J and J~ on the full (d, theta) grid, shape (len(grid), len(thetas)).

    Slow (no streaming or batching); meant for small grids when inspecting
    the two-dimensional problem directly.
    """
    cfg = config or LocaliserConfig()
    dt, N = record.dt, record.n_samples
    guard = default_tail_guard(net) if cfg.tail_guard is None else float(cfg.tail_guard)
    Ne = N - int(math.ceil(guard / dt - 1e-9))
    if Ne < 2:
        raise AssumptionViolated("tail guard leaves no samples")
    T = (Ne - 1) * dt
    sg = SpectralGrid.for_record(N, dt, cfg.beta, min(cfg.omega_band, math.pi / dt))
    win = np.exp(-cfg.beta * dt * np.arange(N))[:, None]
    U = dt * np.fft.rfft(record.stacked() * win, n=sg.n_fft, axis=0)
    chan = np.flatnonzero(net.mask.vector)
    thetas = np.asarray(thetas, dtype=float)
    J = np.full((len(grid), thetas.size), np.nan)
    Jt = np.full_like(J, np.nan)
    for a, d in enumerate(grid):
        est = estimate_fault_ports(net, U, sg.s, d)
        V4, I4 = est.V4[:, chan], est.I4[:, chan]
        v4w = windowed_inverse(V4, sg)[:Ne]
        vfw = None
        if phi is not None:
            P = impedance_values(phi, sg.s, net.dims.n4)[:, chan][:, :, chan]
            vfw = windowed_inverse(-np.einsum("kab,kb->ka", P, I4), sg)[:Ne]
        I4r = dt * np.fft.rfft(windowed_inverse(I4, sg)[:Ne], n=sg.n_fft, axis=0)
        for b, th in enumerate(thetas):
            if vfw is not None:
                J[a, b] = cost_known(vfw, v4w, th, T, cfg.beta, dt)
            if passive:
                Jt[a, b] = cost_passive(I4r, tilde_fault_voltage(v4w, th, sg, Ne), sg, sg.omega_band)
    return J, Jt


def check_recording(record, net):
    """Basic pipeline preconditions on a record against a network's port sizes."""
    d = net.dims
    widths = (record.v1.shape[1], record.i2.shape[1], record.v3.shape[1])
    if widths != (d.n1, d.n2, d.n3):
        raise GridMismatch(f"record widths {widths} do not match ports {(d.n1, d.n2, d.n3)}")
    for name in ("v1", "i2", "v3", "i3"):
        if not np.all(np.isfinite(getattr(record, name))):
            raise NumericalFailure(f"non-finite samples in {name}")
