# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels.

Mirrors the numpy fallback module: identical call signatures, identical
scan orders and strict-less-than tie handling, so both backends make the
same decisions (up to floating-point rounding of the QR factor).
"""
import numpy as np

from libc.math cimport cos, sin, sqrt

BACKEND = "c"


cdef inline double _cabs2(double re, double im) nogil:
    return re * re + im * im


def siso_ml_batch(y, h_a, h_b, double es, pts):
    """Joint ML over both senders for superposed single-antenna MA slots."""
    cdef double complex[::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    cdef double complex[::1] hav = np.ascontiguousarray(h_a, dtype=np.complex128)
    cdef double complex[::1] hbv = np.ascontiguousarray(h_b, dtype=np.complex128)
    cdef double complex[::1] pv = np.ascontiguousarray(pts, dtype=np.complex128)
    cdef Py_ssize_t n = yv.shape[0], m = pv.shape[0]
    ia_arr = np.empty(n, dtype=np.int64)
    ib_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] ia = ia_arr
    cdef long long[::1] ib = ib_arr
    cdef Py_ssize_t i, a, b
    cdef double sq = sqrt(es)
    cdef double best, met
    cdef double complex ca, d
    with nogil:
        for i in range(n):
            best = 1e308
            for a in range(m):
                ca = sq * hav[i] * pv[a]
                for b in range(m):
                    d = yv[i] - ca - sq * hbv[i] * pv[b]
                    met = _cabs2(d.real, d.imag)
                    if met < best:
                        best = met
                        ia[i] = a
                        ib[i] = b
    return ia_arr, ib_arr


cdef void _exh_one(
    double complex y1, double complex y2,
    double complex h1, double complex h2,
    double complex h3, double complex h4,
    double sq, double complex[::1] t1, double complex[::1] t2,
    Py_ssize_t m, long long* out
) nogil:
    cdef Py_ssize_t t_sq = t1.shape[0]
    cdef Py_ssize_t ta, tb, bta = 0, btb = 0
    cdef double best = 1e308, met
    cdef double complex b1, b2, d1, d2
    for tb in range(t_sq):  # t_b-major scan, ties to the lowest (t_b, t_a)
        b1 = y1 - sq * h3 * t1[tb]
        b2 = y2 - sq * h4 * t2[tb]
        for ta in range(t_sq):
            d1 = b1 - sq * h1 * t1[ta]
            d2 = b2 - sq * h2 * t2[ta]
            met = _cabs2(d1.real, d1.imag) + _cabs2(d2.real, d2.imag)
            if met < best:
                best = met
                bta = ta
                btb = tb
    out[0] = bta // m
    out[1] = bta % m
    out[2] = btb // m
    out[3] = btb % m


def scheme2_exhaustive_batch(y, h, double es, tilde1, tilde2):
    """Joint ML over all symbol quadruples; returns (N, 4) index array."""
    cdef double complex[:, ::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    cdef double complex[:, ::1] hv = np.ascontiguousarray(h, dtype=np.complex128)
    cdef double complex[::1] t1 = np.ascontiguousarray(tilde1, dtype=np.complex128)
    cdef double complex[::1] t2 = np.ascontiguousarray(tilde2, dtype=np.complex128)
    cdef Py_ssize_t n = yv.shape[0]
    cdef Py_ssize_t m = <Py_ssize_t> round(sqrt(<double> t1.shape[0]))
    out_arr = np.empty((n, 4), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef double sq = sqrt(es)
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _exh_one(
                yv[i, 0], yv[i, 1], hv[i, 0], hv[i, 1], hv[i, 2], hv[i, 3],
                sq, t1, t2, m, &out[i, 0],
            )
    return out_arr


cdef void _qr48(double* r, double* q) nogil:
    """In-place Householder QR of a 4x8 row-major matrix; q starts as I."""
    cdef double x[4]
    cdef double tmp[8]
    cdef Py_ssize_t k, i, j, nk
    cdef double normx, alpha, beta, s, w
    for k in range(4):
        nk = 4 - k
        normx = 0.0
        for i in range(nk):
            x[i] = r[(k + i) * 8 + k]
            normx += x[i] * x[i]
        normx = sqrt(normx)
        if normx == 0.0:
            continue
        alpha = -normx if x[0] >= 0 else normx
        x[0] -= alpha
        beta = 0.0
        for i in range(nk):
            beta += x[i] * x[i]
        if beta == 0.0:
            continue
        # r[k:, k:] -= (2/beta) x (x^T r[k:, k:])
        for j in range(k, 8):
            s = 0.0
            for i in range(nk):
                s += x[i] * r[(k + i) * 8 + j]
            tmp[j - k] = s * (2.0 / beta)
        for i in range(nk):
            for j in range(k, 8):
                r[(k + i) * 8 + j] -= x[i] * tmp[j - k]
        # q[:, k:] -= (q[:, k:] x) ((2/beta) x)^T
        for i in range(4):
            s = 0.0
            for j in range(nk):
                s += q[i * 4 + (k + j)] * x[j]
            s *= 2.0 / beta
            for j in range(nk):
                q[i * 4 + (k + j)] -= s * x[j]
    for i in range(4):
        if r[i * 8 + i] < 0:
            for j in range(8):
                r[i * 8 + j] = -r[i * 8 + j]
            for j in range(4):
                q[j * 4 + i] = -q[j * 4 + i]
    for i in range(4):
        for j in range(i):
            r[i * 8 + j] = 0.0


def scheme2_conditional_batch(
    y,
    h,
    double es,
    s_i,
    s_q,
    double rotation,
    int square,
    pam,
    mids,
    tilde1,
    tilde2,
):
    """QR-structured conditional ML over a batch; see the fallback module."""
    cdef double complex[:, ::1] yv = np.ascontiguousarray(y, dtype=np.complex128)
    cdef double complex[:, ::1] hv = np.ascontiguousarray(h, dtype=np.complex128)
    cdef double[::1] siv = np.ascontiguousarray(s_i, dtype=np.float64)
    cdef double[::1] sqv_ = np.ascontiguousarray(s_q, dtype=np.float64)
    cdef double[::1] pamv = np.ascontiguousarray(pam, dtype=np.float64)
    cdef double[::1] midv = np.ascontiguousarray(mids, dtype=np.float64)
    cdef double complex[::1] t1 = np.ascontiguousarray(tilde1, dtype=np.complex128)
    cdef double complex[::1] t2 = np.ascontiguousarray(tilde2, dtype=np.complex128)
    cdef Py_ssize_t n = yv.shape[0], m = siv.shape[0]
    cdef Py_ssize_t side = pamv.shape[0], nmid = midv.shape[0]
    idx_arr = np.empty((n, 4), dtype=np.int64)
    ev_arr = np.empty(n, dtype=np.int64)
    fb_arr = np.zeros(n, dtype=np.uint8)
    cdef long long[:, ::1] idx = idx_arr
    cdef long long[::1] ev = ev_arr
    cdef unsigned char[::1] fb = fb_arr
    cdef double sqe = sqrt(es), ct = cos(rotation), st = sin(rotation)
    cdef double r[32]
    cdef double q[16]
    cdef double yt[4]
    cdef double yp[4]
    cdef double u[4]
    cdef double sb[4]
    cdef Py_ssize_t i, j, k, tb, b1, b2, ia, qi, ii, blk
    cdef double h1r, h1i, h2r, h2i, h3r, h3i, h4r, h4i
    cdef double rmax, dmin, v, best, tot
    cdef double u0, u1, c00, c01, c11, bm, met, t0, ratio, sqval
    cdef Py_ssize_t bi, ba1, ba2, evals
    cdef double he[32]
    with nogil:
        for i in range(n):
            h1r = hv[i, 0].real; h1i = hv[i, 0].imag
            h2r = hv[i, 1].real; h2i = hv[i, 1].imag
            h3r = hv[i, 2].real; h3i = hv[i, 2].imag
            h4r = hv[i, 3].real; h4i = hv[i, 3].imag
            for j in range(32):
                he[j] = 0.0
            he[0] = h1r; he[3] = -h1i; he[4] = h3r; he[7] = -h3i
            he[8] = h1i; he[11] = h1r; he[12] = h3i; he[15] = h3r
            he[17] = -h2i; he[18] = h2r; he[21] = -h4i; he[22] = h4r
            he[25] = h2r; he[26] = h2i; he[29] = h4r; he[30] = h4i
            # r = sqrt(es) * he @ (I4 (x) rot(rotation))
            for j in range(4):
                for k in range(4):
                    r[j * 8 + 2 * k] = sqe * (
                        he[j * 8 + 2 * k] * ct + he[j * 8 + 2 * k + 1] * st
                    )
                    r[j * 8 + 2 * k + 1] = sqe * (
                        -he[j * 8 + 2 * k] * st + he[j * 8 + 2 * k + 1] * ct
                    )
            for j in range(16):
                q[j] = 0.0
            q[0] = q[5] = q[10] = q[15] = 1.0
            _qr48(r, q)
            rmax = 1.0
            for j in range(32):
                v = r[j] if r[j] >= 0 else -r[j]
                if v > rmax:
                    rmax = v
            dmin = r[0]
            for j in range(1, 4):
                if r[j * 8 + j] < dmin:
                    dmin = r[j * 8 + j]
            if dmin < 1e-10 * rmax:
                _exh_one(
                    yv[i, 0], yv[i, 1], hv[i, 0], hv[i, 1], hv[i, 2], hv[i, 3],
                    sqe, t1, t2, m, &idx[i, 0],
                )
                ev[i] = m * m * m * m
                fb[i] = 1
                continue
            yt[0] = yv[i, 0].real; yt[1] = yv[i, 0].imag
            yt[2] = yv[i, 1].real; yt[3] = yv[i, 1].imag
            for j in range(4):
                yp[j] = (
                    q[j] * yt[0] + q[4 + j] * yt[1] + q[8 + j] * yt[2] + q[12 + j] * yt[3]
                )
            best = 1e308
            evals = 0
            for tb in range(m * m):
                b1 = tb // m
                b2 = tb % m
                sb[0] = siv[b1]; sb[1] = sqv_[b1]; sb[2] = siv[b2]; sb[3] = sqv_[b2]
                for j in range(4):
                    u[j] = yp[j] - (
                        r[j * 8 + 4] * sb[0] + r[j * 8 + 5] * sb[1]
                        + r[j * 8 + 6] * sb[2] + r[j * 8 + 7] * sb[3]
                    )
                tot = 0.0
                ba1 = 0
                ba2 = 0
                for blk in range(2):
                    if blk == 0:
                        u0 = u[0]; u1 = u[1]; c00 = r[0]; c01 = r[1]; c11 = r[9]
                    else:
                        u0 = u[2]; u1 = u[3]; c00 = r[18]; c01 = r[19]; c11 = r[27]
                    bm = 1e308
                    bi = 0
                    if square == 0:
                        for ia in range(m):
                            met = (u0 - c00 * siv[ia] - c01 * sqv_[ia]) ** 2 + (
                                u1 - c11 * sqv_[ia]
                            ) ** 2
                            evals += 1
                            if met < bm:
                                bm = met
                                bi = ia
                    else:
                        for qi in range(side):
                            sqval = pamv[qi]
                            t0 = u0 - c01 * sqval
                            ratio = t0 / c00
                            ii = 0
                            while ii < nmid and midv[ii] < ratio:
                                ii += 1
                            met = (t0 - c00 * pamv[ii]) ** 2 + (u1 - c11 * sqval) ** 2
                            evals += 1
                            if met < bm:
                                bm = met
                                bi = ii * side + qi
                    tot += bm
                    if blk == 0:
                        ba1 = bi
                    else:
                        ba2 = bi
                if tot < best:
                    best = tot
                    idx[i, 0] = ba1
                    idx[i, 1] = ba2
                    idx[i, 2] = b1
                    idx[i, 3] = b2
            ev[i] = evals
    return idx_arr, ev_arr, fb_arr
