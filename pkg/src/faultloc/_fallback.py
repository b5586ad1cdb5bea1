"""Pure numpy/scipy implementations of the hot kernels.

Signatures match the compiled module so either can be swapped in by
``faultloc.kernels``.
"""
import numpy as np
import scipy.linalg as sla

_EPS = np.finfo(float).eps


def expm_batch(A):
    A = np.ascontiguousarray(A, dtype=complex)
    if A.shape[0] == 0:
        return A.copy()
    return sla.expm(A)


def admittance_from_abcd(xi_up, xi_dn, mask, cond_limit):
    """Faulted-line admittance per bin from the two segment chain matrices.

    ``xi_up`` is the chain matrix of the source-side segment, ``xi_dn`` of the
    sensor-side one.  Returns ``(Y, cond, ok)``; bins whose B block is too
    ill-conditioned have ``ok`` false and an all-zero ``Y``.
    """
    xi_up = np.asarray(xi_up, dtype=complex)
    xi_dn = np.asarray(xi_dn, dtype=complex)
    K, m2, _ = xi_up.shape
    n = m2 // 2
    N = 3 * n + 1
    p = np.asarray(mask, dtype=float)
    Y = np.zeros((K, N, N), dtype=complex)
    cond = np.full(K, np.inf)
    ok = np.zeros(K, dtype=bool)
    if K == 0:
        return Y, cond, ok
    blocks = []
    for xi in (xi_up, xi_dn):
        B = xi[:, :n, n:]
        D = xi[:, n:, n:]
        with np.errstate(all="ignore"):
            try:
                Binv = np.linalg.inv(B)
                good = np.ones(K, dtype=bool)
            except np.linalg.LinAlgError:
                Binv = np.empty_like(B)
                good = np.zeros(K, dtype=bool)
                for k in range(K):
                    try:
                        Binv[k] = np.linalg.inv(B[k])
                        good[k] = True
                    except np.linalg.LinAlgError:
                        Binv[k] = 0.0
            c = np.abs(B).sum(axis=1).max(axis=1) * np.abs(Binv).sum(axis=1).max(axis=1)
        c = np.where(good & np.isfinite(c), c, np.inf)
        blocks.append((D @ Binv, -Binv, c))
    (y1u, y2u, cu), (y1d, y2d, cd) = blocks
    cond = np.maximum(cu, cd)
    ok = cond <= cond_limit
    o3, o4 = n + 1, 2 * n + 1
    Y[:, :n, :n] = y1u
    Y[:, :n, o4:] = y2u
    Y[:, n, n] = 1.0
    Y[:, o3:o4, o3:o4] = y1d
    Y[:, o3:o4, o4:] = y2d
    Y[:, o4:, :n] = p[:, None] * y2u
    Y[:, o4:, o3:o4] = p[:, None] * y2d
    Y[:, o4:, o4:] = p[:, None] * (y1u + y1d)
    Y[~ok] = 0.0
    return Y, cond, ok


def psi_apply(Y, U, n1, n2, n3, n4):
    """Apply the fault-signal operator of each ``Y[k]`` to every column set ``U[k, j]``.

    Returns ``(est, smin, smax)`` with ``est[k, j] = (v4_hat, i4_hat)``.
    """
    Y = np.asarray(Y, dtype=complex)
    U = np.asarray(U, dtype=complex)
    K = Y.shape[0]
    o2, o3, o4 = n1, n1 + n2, n1 + n2 + n3
    rows = np.r_[o2:o2 + n2, o3:o3 + n3]
    cols = np.r_[o2:o2 + n2, o4:o4 + n4]
    Yb = Y[:, rows][:, :, cols]
    m, p = Yb.shape[1:]
    Us, s, Vh = np.linalg.svd(Yb, full_matrices=False)
    smax = s[:, 0] if s.shape[1] else np.zeros(K)
    smin = np.zeros(K) if m < p else s[:, -1]
    tol = max(m, p) * _EPS * smax
    keep = s > tol[:, None]
    sinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    v1 = U[:, :, :n1]
    i2 = U[:, :, n1:n1 + n2]
    v3 = U[:, :, n1 + n2:n1 + n2 + n3]
    i3 = U[:, :, n1 + n2 + n3:]
    Y21 = Y[:, o2:o3, :n1]
    Y23 = Y[:, o2:o3, o3:o4]
    Y31 = Y[:, o3:o4, :n1]
    Y33 = Y[:, o3:o4, o3:o4]
    mv = np.matmul
    r_top = mv(v1, _T(Y21)) - i2 + mv(v3, _T(Y23))
    r_bot = mv(v1, _T(Y31)) + mv(v3, _T(Y33)) - i3
    r = np.concatenate([r_top, r_bot], axis=2)
    # x = V diag(1/s) U^H r, row-vector form
    c = mv(r, Us.conj()) * sinv[:, None, :]
    x = mv(c, Vh.conj())
    x2, x4 = x[:, :, :n2], x[:, :, n2:]
    Y41 = Y[:, o4:, :n1]
    Y42 = Y[:, o4:, o2:o3]
    Y43 = Y[:, o4:, o3:o4]
    Y44 = Y[:, o4:, o4:]
    i4 = mv(v1, _T(Y41)) + mv(v3, _T(Y43)) - mv(x2, _T(Y42)) - mv(x4, _T(Y44))
    est = np.concatenate([-x4, i4], axis=2)
    return est, smin, smax


def _T(a):
    return np.swapaxes(a, -1, -2)


def _banded_upper(diag, off):
    S, n, _ = diag.shape
    M = np.zeros((S * n, S * n))
    for j in range(S):
        M[j * n:(j + 1) * n, j * n:(j + 1) * n] = diag[j]
        if j + 1 < S:
            M[j * n:(j + 1) * n, (j + 1) * n:(j + 2) * n] = off
            M[(j + 1) * n:(j + 2) * n, j * n:(j + 1) * n] = off.T
    u = 2 * n - 1
    ab = np.zeros((u + 1, S * n))
    for k in range(u + 1):
        ab[u - k, k:] = np.diagonal(M, k)
    return sla.cholesky_banded(ab, lower=False)


def ladder_run(src, src_mid, k_sw, decim, Gb, Hb_tr, Hb_be, Yc, Kc_tr, Kc_be,
               diag_pre, diag_post, off, jf):
    """Step the pi-ladder from rest; see ``faultloc.simulator`` for the model.

    Returns recorded (port-3 voltage, fault-node voltage, source-branch current).
    """
    src = np.asarray(src, dtype=float)
    nsteps = src.shape[0] - 1
    S, n, _ = Yc.shape
    facs = (_banded_upper(diag_pre, off), _banded_upper(diag_post, off))
    nrec = nsteps // decim + 1
    rec_v3 = np.zeros((nrec, n))
    rec_vf = np.zeros((nrec, n))
    rec_i1 = np.zeros((nrec, n))
    v = np.zeros((S, n))
    ib = np.zeros((S, n))
    ic = np.zeros((S, n))
    for k in range(nsteps):
        closed = k >= k_sw
        fac = facs[1 if closed else 0]
        if k == 0 or k == k_sw:
            mid = src_mid[0 if k == 0 else 1]
            for a, b in ((src[k], mid), (mid, src[k + 1])):
                v, ib, ic = _sub_step(v, ib, ic, a, b, fac, Gb, Hb_be, Yc, Kc_be, S, n, be=True)
        else:
            v, ib, ic = _sub_step(v, ib, ic, src[k], src[k + 1], fac,
                                  Gb, Hb_tr, Yc, Kc_tr, S, n, be=False)
        if (k + 1) % decim == 0:
            r = (k + 1) // decim
            rec_v3[r] = v[S - 1]
            rec_vf[r] = v[jf]
            rec_i1[r] = ib[0]
    if not (np.isfinite(rec_v3).all() and np.isfinite(rec_i1).all()):
        raise FloatingPointError("non-finite ladder state")
    return rec_v3, rec_vf, rec_i1


def _sub_step(v, ib, ic, v0_old, v0_new, fac, Gb, Hb, Yc, Kc, S, n, be):
    vprev = np.vstack([v0_old[None, :], v[:-1]])
    e_old = vprev - v
    if be:
        hist = ib @ Hb.T
    else:
        hist = e_old @ Gb.T + ib @ Hb.T
    hc = np.einsum("jab,jb->ja", Kc, v)
    if not be:
        hc += ic
    rhs = hc + hist
    rhs[:-1] -= hist[1:]
    rhs[0] += Gb @ v0_new
    vn = sla.cho_solve_banded((fac, False), rhs.ravel()).reshape(S, n)
    vprev_n = np.vstack([v0_new[None, :], vn[:-1]])
    ibn = (vprev_n - vn) @ Gb.T + hist
    icn = np.einsum("jab,jb->ja", Yc, vn) - hc
    return vn, ibn, icn
