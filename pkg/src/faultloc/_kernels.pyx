# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: batched small-matrix exponentials, the per-bin
fault-signal operator and the ladder time stepper."""
import numpy as np
from libc.math cimport sqrt, fabs, ceil, log2, isfinite, INFINITY

ctypedef double complex cplx

cdef double EPS = np.finfo(float).eps

cdef double[14] PADE13 = [
    64764752532480000., 32382376266240000., 7771770303897600.,
    1187353796428800., 129060195264000., 10559470521600., 670442572800.,
    33522128640., 1323241920., 40840800., 960960., 16380., 182., 1.]
cdef double THETA13 = 5.371920351148152


cdef inline double abs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double cabs_(cplx z) noexcept nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef void cmatmul(int m, const cplx* A, const cplx* B, cplx* C) noexcept nogil:
    cdef int i, j, l
    cdef cplx a
    for i in range(m * m):
        C[i] = 0
    for i in range(m):
        for l in range(m):
            a = A[i * m + l]
            for j in range(m):
                C[i * m + j] = C[i * m + j] + a * B[l * m + j]


cdef int clu_solve(int m, cplx* A, cplx* B, int nrhs) noexcept nogil:
    """Solve A X = B in place (B is m x nrhs), partial pivoting.  Returns 0 or 1 if singular."""
    cdef int i, j, k, piv
    cdef double best, v
    cdef cplx t, f
    for k in range(m):
        piv = k
        best = abs2(A[k * m + k])
        for i in range(k + 1, m):
            v = abs2(A[i * m + k])
            if v > best:
                best = v
                piv = i
        if best == 0.0:
            return 1
        if piv != k:
            for j in range(m):
                t = A[k * m + j]; A[k * m + j] = A[piv * m + j]; A[piv * m + j] = t
            for j in range(nrhs):
                t = B[k * nrhs + j]; B[k * nrhs + j] = B[piv * nrhs + j]; B[piv * nrhs + j] = t
        for i in range(k + 1, m):
            f = A[i * m + k] / A[k * m + k]
            if f.real == 0.0 and f.imag == 0.0:
                continue
            for j in range(k + 1, m):
                A[i * m + j] = A[i * m + j] - f * A[k * m + j]
            for j in range(nrhs):
                B[i * nrhs + j] = B[i * nrhs + j] - f * B[k * nrhs + j]
    for k in range(m - 1, -1, -1):
        for j in range(nrhs):
            t = B[k * nrhs + j]
            for i in range(k + 1, m):
                t = t - A[k * m + i] * B[i * nrhs + j]
            B[k * nrhs + j] = t / A[k * m + k]
    return 0


cdef int expm_one(int m, const cplx* A0, cplx* out, cplx* w) noexcept nogil:
    """Pade-13 scaling and squaring; ``w`` must hold 8*m*m entries."""
    cdef cplx* A = w
    cdef cplx* A2 = w + m * m
    cdef cplx* A4 = w + 2 * m * m
    cdef cplx* A6 = w + 3 * m * m
    cdef cplx* T1 = w + 4 * m * m
    cdef cplx* T2 = w + 5 * m * m
    cdef cplx* Um = w + 6 * m * m
    cdef cplx* Vm = w + 7 * m * m
    cdef int i, j, s, mm = m * m
    cdef double nrm = 0.0, col, scale
    cdef const double* b = PADE13
    for j in range(m):
        col = 0.0
        for i in range(m):
            col += cabs_(A0[i * m + j])
        if col > nrm:
            nrm = col
    if not isfinite(nrm):
        return 1
    s = 0
    if nrm > THETA13:
        s = <int>ceil(log2(nrm / THETA13))
    scale = 1.0
    for i in range(s):
        scale *= 0.5
    for i in range(mm):
        A[i] = A0[i] * scale
    cmatmul(m, A, A, A2)
    cmatmul(m, A2, A2, A4)
    cmatmul(m, A4, A2, A6)
    for i in range(mm):
        T1[i] = b[13] * A6[i] + b[11] * A4[i] + b[9] * A2[i]
    cmatmul(m, A6, T1, T2)
    for i in range(mm):
        T2[i] = T2[i] + b[7] * A6[i] + b[5] * A4[i] + b[3] * A2[i]
    for i in range(m):
        T2[i * m + i] = T2[i * m + i] + b[1]
    cmatmul(m, A, T2, Um)
    for i in range(mm):
        T1[i] = b[12] * A6[i] + b[10] * A4[i] + b[8] * A2[i]
    cmatmul(m, A6, T1, Vm)
    for i in range(mm):
        Vm[i] = Vm[i] + b[6] * A6[i] + b[4] * A4[i] + b[2] * A2[i]
    for i in range(m):
        Vm[i * m + i] = Vm[i * m + i] + b[0]
    # (V - U) R = (V + U)
    for i in range(mm):
        T1[i] = Vm[i] - Um[i]
        out[i] = Vm[i] + Um[i]
    if clu_solve(m, T1, out, m):
        return 1
    for i in range(s):
        cmatmul(m, out, out, T1)
        for j in range(mm):
            out[j] = T1[j]
    return 0


def expm_batch(A):
    A = np.ascontiguousarray(A, dtype=complex)
    cdef const cplx[:, :, ::1] a = A
    cdef Py_ssize_t K = a.shape[0], k
    cdef int m = <int>a.shape[1]
    out = np.empty_like(A)
    if K == 0:
        return out
    cdef cplx[:, :, ::1] o = out
    cdef cplx[::1] w = np.empty(8 * m * m, dtype=complex)
    cdef int bad = 0
    with nogil:
        for k in range(K):
            if expm_one(m, &a[k, 0, 0], &o[k, 0, 0], &w[0]):
                bad = 1
                break
    if bad:
        raise FloatingPointError("matrix exponential failed")
    return out


cdef double inv_cond1(int n, const cplx* B, cplx* Binv, cplx* w) noexcept nogil:
    """Invert B; returns the 1-norm condition number (inf if singular)."""
    cdef int i, j
    cdef double nb = 0.0, ni = 0.0, c1, c2
    for i in range(n * n):
        w[i] = B[i]
        Binv[i] = 0
    for i in range(n):
        Binv[i * n + i] = 1
    if clu_solve(n, w, Binv, n):
        return INFINITY
    for j in range(n):
        c1 = 0.0
        c2 = 0.0
        for i in range(n):
            c1 += cabs_(B[i * n + j])
            c2 += cabs_(Binv[i * n + j])
        if c1 > nb:
            nb = c1
        if c2 > ni:
            ni = c2
    c1 = nb * ni
    if not isfinite(c1):
        return INFINITY
    return c1


def admittance_from_abcd(xi_up, xi_dn, mask, double cond_limit):
    xi_up = np.ascontiguousarray(xi_up, dtype=complex)
    xi_dn = np.ascontiguousarray(xi_dn, dtype=complex)
    cdef const cplx[:, :, ::1] xu = xi_up
    cdef const cplx[:, :, ::1] xd = xi_dn
    cdef const double[::1] p = np.ascontiguousarray(mask, dtype=float)
    cdef Py_ssize_t K = xu.shape[0], k
    cdef int n = <int>(xu.shape[1] // 2)
    cdef int N = 3 * n + 1, i, j, l, o3 = n + 1, o4 = 2 * n + 1, side
    Y = np.zeros((K, N, N), dtype=complex)
    cond = np.empty(K)
    ok = np.zeros(K, dtype=bool)
    cdef cplx[:, :, ::1] y = Y
    cdef double[::1] cd = cond
    cdef unsigned char[::1] okv = ok.view(np.uint8)
    cdef cplx[:, ::1] Bb = np.empty((2, n * n), dtype=complex)
    cdef cplx[:, ::1] Bi = np.empty((2, n * n), dtype=complex)
    cdef cplx[:, ::1] Dbi = np.empty((2, n * n), dtype=complex)
    cdef cplx[::1] w = np.empty(n * n, dtype=complex)
    cdef double c, cmax
    cdef cplx acc
    cdef const cplx* X
    with nogil:
        for k in range(K):
            cmax = 0.0
            for side in range(2):
                X = &xu[k, 0, 0] if side == 0 else &xd[k, 0, 0]
                for i in range(n):
                    for j in range(n):
                        Bb[side, i * n + j] = X[i * 2 * n + n + j]
                c = inv_cond1(n, &Bb[side, 0], &Bi[side, 0], &w[0])
                if c > cmax:
                    cmax = c
                for i in range(n):
                    for j in range(n):
                        acc = 0
                        for l in range(n):
                            acc = acc + X[(n + i) * 2 * n + n + l] * Bi[side, l * n + j]
                        Dbi[side, i * n + j] = acc
            cd[k] = cmax
            if not (cmax <= cond_limit):
                continue
            okv[k] = 1
            for i in range(n):
                for j in range(n):
                    y[k, i, j] = Dbi[0, i * n + j]
                    y[k, i, o4 + j] = -Bi[0, i * n + j]
                    y[k, o3 + i, o3 + j] = Dbi[1, i * n + j]
                    y[k, o3 + i, o4 + j] = -Bi[1, i * n + j]
                    y[k, o4 + i, j] = -p[i] * Bi[0, i * n + j]
                    y[k, o4 + i, o3 + j] = -p[i] * Bi[1, i * n + j]
                    y[k, o4 + i, o4 + j] = p[i] * (Dbi[0, i * n + j] + Dbi[1, i * n + j])
            y[k, n, n] = 1
    return Y, cond, ok


cdef void jacobi_cols(int m, int p, cplx* A, cplx* V) noexcept nogil:
    """One-sided (Hestenes) Jacobi: rotate columns of A (m x p) until orthogonal, accumulating V."""
    cdef int sweep, a, b, i, rotated
    cdef double alpha, beta, g, zeta, t, c, s
    cdef cplx gamma, e, ap, aq, se, sec
    for i in range(p * p):
        V[i] = 0
    for i in range(p):
        V[i * p + i] = 1
    for sweep in range(60):
        rotated = 0
        for a in range(p - 1):
            for b in range(a + 1, p):
                alpha = 0.0
                beta = 0.0
                gamma = 0
                for i in range(m):
                    ap = A[i * p + a]
                    aq = A[i * p + b]
                    alpha += abs2(ap)
                    beta += abs2(aq)
                    gamma = gamma + ap.conjugate() * aq
                g = cabs_(gamma)
                if g == 0.0 or g <= EPS * sqrt(alpha * beta):
                    continue
                rotated = 1
                zeta = (beta - alpha) / (2.0 * g)
                t = 1.0 / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                if zeta < 0:
                    t = -t
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                e = gamma / g
                se = s * e
                sec = s * e.conjugate()
                for i in range(m):
                    ap = A[i * p + a]
                    aq = A[i * p + b]
                    A[i * p + a] = c * ap - sec * aq
                    A[i * p + b] = se * ap + c * aq
                for i in range(p):
                    ap = V[i * p + a]
                    aq = V[i * p + b]
                    V[i * p + a] = c * ap - sec * aq
                    V[i * p + b] = se * ap + c * aq
        if not rotated:
            break


def psi_apply(Y, U, int n1, int n2, int n3, int n4):
    Y = np.ascontiguousarray(Y, dtype=complex)
    U = np.ascontiguousarray(U, dtype=complex)
    cdef const cplx[:, :, ::1] y = Y
    cdef const cplx[:, :, ::1] u = U
    cdef Py_ssize_t K = y.shape[0], P = u.shape[1], k, jj
    cdef int N = n1 + n2 + n3 + n4, nin = n1 + n2 + 2 * n3
    if y.shape[1] != N or y.shape[2] != N or u.shape[2] != nin or u.shape[0] != K:
        raise ValueError("inconsistent dimensions")
    cdef int m = n2 + n3, p = n2 + n4, o2 = n1, o3 = n1 + n2, o4 = n1 + n2 + n3
    cdef int a, b, i, c
    est = np.zeros((K, P, 2 * n4), dtype=complex)
    smin_a = np.zeros(K)
    smax_a = np.zeros(K)
    cdef cplx[:, :, ::1] es = est
    cdef double[::1] smin = smin_a
    cdef double[::1] smax = smax_a
    cdef cplx[::1] A = np.empty(m * p, dtype=complex)
    cdef cplx[::1] V = np.empty(p * p, dtype=complex)
    cdef cplx[::1] r = np.empty(m, dtype=complex)
    cdef cplx[::1] x = np.empty(p, dtype=complex)
    cdef cplx[::1] coef = np.empty(p, dtype=complex)
    cdef double[::1] sig = np.empty(p)
    cdef int[::1] ri = np.empty(m, dtype=np.intc)
    cdef int[::1] ci = np.empty(p, dtype=np.intc)
    for a in range(n2):
        ri[a] = o2 + a
        ci[a] = o2 + a
    for a in range(n3):
        ri[n2 + a] = o3 + a
    for a in range(n4):
        ci[n2 + a] = o4 + a
    cdef double tol, sm, sx
    cdef cplx acc
    with nogil:
        for k in range(K):
            for a in range(m):
                for b in range(p):
                    A[a * p + b] = y[k, ri[a], ci[b]]
            jacobi_cols(m, p, &A[0], &V[0])
            sx = 0.0
            sm = INFINITY
            for b in range(p):
                tol = 0.0
                for a in range(m):
                    tol += abs2(A[a * p + b])
                sig[b] = sqrt(tol)
                if sig[b] > sx:
                    sx = sig[b]
                if sig[b] < sm:
                    sm = sig[b]
            if m < p:
                sm = 0.0
            smax[k] = sx
            smin[k] = sm
            tol = (m if m > p else p) * EPS * sx
            for jj in range(P):
                for a in range(n2):
                    acc = -u[k, jj, n1 + a]
                    for c in range(n1):
                        acc = acc + y[k, o2 + a, c] * u[k, jj, c]
                    for c in range(n3):
                        acc = acc + y[k, o2 + a, o3 + c] * u[k, jj, n1 + n2 + c]
                    r[a] = acc
                for a in range(n3):
                    acc = -u[k, jj, n1 + n2 + n3 + a]
                    for c in range(n1):
                        acc = acc + y[k, o3 + a, c] * u[k, jj, c]
                    for c in range(n3):
                        acc = acc + y[k, o3 + a, o3 + c] * u[k, jj, n1 + n2 + c]
                    r[n2 + a] = acc
                for b in range(p):
                    if sig[b] > tol and sig[b] > 0.0:
                        acc = 0
                        for a in range(m):
                            acc = acc + A[a * p + b].conjugate() * r[a]
                        coef[b] = acc / (sig[b] * sig[b])
                    else:
                        coef[b] = 0
                for i in range(p):
                    acc = 0
                    for b in range(p):
                        acc = acc + V[i * p + b] * coef[b]
                    x[i] = acc
                for a in range(n4):
                    es[k, jj, a] = -x[n2 + a]
                    acc = 0
                    for c in range(n1):
                        acc = acc + y[k, o4 + a, c] * u[k, jj, c]
                    for c in range(n3):
                        acc = acc + y[k, o4 + a, o3 + c] * u[k, jj, n1 + n2 + c]
                    for c in range(n2):
                        acc = acc - y[k, o4 + a, o2 + c] * x[c]
                    for c in range(n4):
                        acc = acc - y[k, o4 + a, o4 + c] * x[n2 + c]
                    es[k, jj, n4 + a] = acc
    return est, smin_a, smax_a


def _block_thomas(diag, off):
    """Factor the symmetric block-tridiagonal nodal matrix (no pivoting; SPD)."""
    S, n, _ = diag.shape
    Dinv = np.empty((S, n, n))
    W = np.zeros((S, n, n))
    E = np.zeros((S, n, n))
    Dinv[0] = np.linalg.inv(diag[0])
    for j in range(1, S):
        W[j] = off.T @ Dinv[j - 1]
        Dinv[j] = np.linalg.inv(diag[j] - W[j] @ off)
    for j in range(S - 1):
        E[j] = Dinv[j] @ off
    return Dinv, W, E


cdef void ladder_substep(int S, int n, double* v, double* ib, double* ic,
                         const double* v0_old, const double* v0_new,
                         const double* Gb, const double* Hb, const double* Yc, const double* Kc,
                         bint be, const double* Dinv, const double* W, const double* E,
                         double* hist, double* hc, double* yv) noexcept nogil:
    cdef int j, a, b, nn = n * n
    cdef const double* vp
    cdef double acc
    for j in range(S):
        vp = v0_old if j == 0 else v + (j - 1) * n
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += Hb[a * n + b] * ib[j * n + b]
                if not be:
                    acc += Gb[a * n + b] * (vp[b] - v[j * n + b])
            hist[j * n + a] = acc
            acc = 0.0 if be else ic[j * n + a]
            for b in range(n):
                acc += Kc[j * nn + a * n + b] * v[j * n + b]
            hc[j * n + a] = acc
    # right-hand side, then forward elimination into yv
    for j in range(S):
        for a in range(n):
            acc = hc[j * n + a] + hist[j * n + a]
            if j + 1 < S:
                acc -= hist[(j + 1) * n + a]
            if j == 0:
                for b in range(n):
                    acc += Gb[a * n + b] * v0_new[b]
            else:
                for b in range(n):
                    acc -= W[j * nn + a * n + b] * yv[(j - 1) * n + b]
            yv[j * n + a] = acc
    for j in range(S - 1, -1, -1):
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += Dinv[j * nn + a * n + b] * yv[j * n + b]
                if j + 1 < S:
                    acc -= E[j * nn + a * n + b] * v[(j + 1) * n + b]
            v[j * n + a] = acc
    for j in range(S):
        vp = v0_new if j == 0 else v + (j - 1) * n
        for a in range(n):
            acc = hist[j * n + a]
            for b in range(n):
                acc += Gb[a * n + b] * (vp[b] - v[j * n + b])
            ib[j * n + a] = acc
            acc = -hc[j * n + a]
            for b in range(n):
                acc += Yc[j * nn + a * n + b] * v[j * n + b]
            ic[j * n + a] = acc


def ladder_run(src, src_mid, long k_sw, long decim, Gb, Hb_tr, Hb_be, Yc, Kc_tr, Kc_be,
               diag_pre, diag_post, off, long jf):
    c = lambda z: np.ascontiguousarray(z, dtype=float)
    src, src_mid, Gb, Hb_tr, Hb_be = c(src), c(src_mid), c(Gb), c(Hb_tr), c(Hb_be)
    Yc, Kc_tr, Kc_be, off = c(Yc), c(Kc_tr), c(Kc_be), c(off)
    f_pre = [c(z) for z in _block_thomas(c(diag_pre), off)]
    f_post = [c(z) for z in _block_thomas(c(diag_post), off)]
    cdef int S = Yc.shape[0], n = Yc.shape[1]
    cdef long nsteps = src.shape[0] - 1, k, r
    cdef long nrec = nsteps // decim + 1
    rv3 = np.zeros((nrec, n))
    rvf = np.zeros((nrec, n))
    ri1 = np.zeros((nrec, n))
    cdef double[:, ::1] o3 = rv3
    cdef double[:, ::1] of = rvf
    cdef double[:, ::1] o1 = ri1
    cdef const double[:, ::1] sv = src
    cdef const double[:, ::1] sm = src_mid
    cdef const double[:, ::1] gb = Gb
    cdef const double[:, ::1] htr = Hb_tr
    cdef const double[:, ::1] hbe = Hb_be
    cdef const double[:, :, ::1] yc = Yc
    cdef const double[:, :, ::1] ktr = Kc_tr
    cdef const double[:, :, ::1] kbe = Kc_be
    cdef const double[:, :, ::1] d0 = f_pre[0]
    cdef const double[:, :, ::1] w0 = f_pre[1]
    cdef const double[:, :, ::1] e0 = f_pre[2]
    cdef const double[:, :, ::1] d1 = f_post[0]
    cdef const double[:, :, ::1] w1 = f_post[1]
    cdef const double[:, :, ::1] e1 = f_post[2]
    cdef double[::1] v = np.zeros(S * n)
    cdef double[::1] ib = np.zeros(S * n)
    cdef double[::1] ic = np.zeros(S * n)
    cdef double[::1] hist = np.zeros(S * n)
    cdef double[::1] hc = np.zeros(S * n)
    cdef double[::1] yv = np.zeros(S * n)
    cdef const double* Di
    cdef const double* Wi
    cdef const double* Ei
    cdef const double* mid
    cdef int a, bad = 0
    with nogil:
        for k in range(nsteps):
            if k >= k_sw:
                Di = &d1[0, 0, 0]; Wi = &w1[0, 0, 0]; Ei = &e1[0, 0, 0]
            else:
                Di = &d0[0, 0, 0]; Wi = &w0[0, 0, 0]; Ei = &e0[0, 0, 0]
            if k == 0 or k == k_sw:
                mid = &sm[0, 0] if k == 0 else &sm[1, 0]
                ladder_substep(S, n, &v[0], &ib[0], &ic[0], &sv[k, 0], mid,
                               &gb[0, 0], &hbe[0, 0], &yc[0, 0, 0], &kbe[0, 0, 0], True,
                               Di, Wi, Ei, &hist[0], &hc[0], &yv[0])
                ladder_substep(S, n, &v[0], &ib[0], &ic[0], mid, &sv[k + 1, 0],
                               &gb[0, 0], &hbe[0, 0], &yc[0, 0, 0], &kbe[0, 0, 0], True,
                               Di, Wi, Ei, &hist[0], &hc[0], &yv[0])
            else:
                ladder_substep(S, n, &v[0], &ib[0], &ic[0], &sv[k, 0], &sv[k + 1, 0],
                               &gb[0, 0], &htr[0, 0], &yc[0, 0, 0], &ktr[0, 0, 0], False,
                               Di, Wi, Ei, &hist[0], &hc[0], &yv[0])
            if (k + 1) % decim == 0:
                r = (k + 1) // decim
                for a in range(n):
                    o3[r, a] = v[(S - 1) * n + a]
                    of[r, a] = v[jf * n + a]
                    o1[r, a] = ib[a]
                    if not (isfinite(v[(S - 1) * n + a]) and isfinite(ib[a])):
                        bad = 1
                if bad:
                    break
    if bad:
        raise FloatingPointError("non-finite ladder state")
    return rv3, rvf, ri1
