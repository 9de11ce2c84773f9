"""Vectorized numpy batch kernels (fallback backend).

Same call signatures and tie-break semantics as the compiled backend: every
argmin scans candidates in ascending index order with strict-less-than
updates, and the relay joint decoders scan node-B symbol pairs in the outer
loop so ties resolve lexicographically in (i_B1, i_B2, i_A1, i_A2).
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

BACKEND = "python"


def siso_ml_batch(y, h_a, h_b, es: float, pts) -> Tuple[np.ndarray, np.ndarray]:
    """Joint ML over both senders for superposed single-antenna MA slots."""
    sq = math.sqrt(es)
    cand = sq * (
        h_a[:, None, None] * pts[None, :, None] + h_b[:, None, None] * pts[None, None, :]
    )
    metric = np.abs(y[:, None, None] - cand) ** 2
    m = len(pts)
    flat = np.argmin(metric.reshape(len(y), m * m), axis=1)
    return flat // m, flat % m


def scheme2_exhaustive_batch(y, h, es: float, tilde1, tilde2) -> np.ndarray:
    """Joint ML over all symbol quadruples; returns (N, 4) index array."""
    n = len(y)
    t_sq = len(tilde1)
    m = int(round(math.sqrt(t_sq)))
    sq = math.sqrt(es)
    out = np.empty((n, 4), dtype=np.int64)
    chunk = 4096
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        hh = h[lo:hi]
        m1 = np.abs(
            y[lo:hi, 0, None, None]
            - sq
            * (
                hh[:, 0, None, None] * tilde1[None, :, None]
                + hh[:, 2, None, None] * tilde1[None, None, :]
            )
        ) ** 2
        m2 = np.abs(
            y[lo:hi, 1, None, None]
            - sq
            * (
                hh[:, 1, None, None] * tilde2[None, :, None]
                + hh[:, 3, None, None] * tilde2[None, None, :]
            )
        ) ** 2
        tot = (m1 + m2).transpose(0, 2, 1).reshape(hi - lo, -1)  # t_b-major scan
        flat = np.argmin(tot, axis=1)
        tb, ta = flat // t_sq, flat % t_sq
        out[lo:hi, 0], out[lo:hi, 1] = ta // m, ta % m
        out[lo:hi, 2], out[lo:hi, 3] = tb // m, tb % m
    return out


def _equivalent_real_channel_batch(h, es: float, rotation: float) -> np.ndarray:
    n = len(h)
    heq = np.zeros((n, 4, 8))
    h1, h2, h3, h4 = h[:, 0], h[:, 1], h[:, 2], h[:, 3]
    heq[:, 0, 0], heq[:, 0, 3], heq[:, 0, 4], heq[:, 0, 7] = (
        h1.real, -h1.imag, h3.real, -h3.imag,
    )
    heq[:, 1, 0], heq[:, 1, 3], heq[:, 1, 4], heq[:, 1, 7] = (
        h1.imag, h1.real, h3.imag, h3.real,
    )
    heq[:, 2, 1], heq[:, 2, 2], heq[:, 2, 5], heq[:, 2, 6] = (
        -h2.imag, h2.real, -h4.imag, h4.real,
    )
    heq[:, 3, 1], heq[:, 3, 2], heq[:, 3, 5], heq[:, 3, 6] = (
        h2.real, h2.imag, h4.real, h4.imag,
    )
    ct, st = math.cos(rotation), math.sin(rotation)
    v = np.kron(np.eye(4), np.array([[ct, -st], [st, ct]]))
    return math.sqrt(es) * (heq @ v)


def scheme2_conditional_batch(
    y,
    h,
    es: float,
    s_i,
    s_q,
    rotation: float,
    square: int,
    pam,
    mids,
    tilde1,
    tilde2,
):
    """QR-structured conditional ML over a batch.

    Returns (indices (N,4), metric_evals (N,), used_fallback (N,) bool).
    Rank-deficient equivalent channels are decoded exhaustively and flagged.
    """
    n = len(y)
    m = len(s_i)
    ht = _equivalent_real_channel_batch(h, es, rotation)
    q, r = np.linalg.qr(ht)
    sign = np.where(np.diagonal(r[:, :, :4], axis1=1, axis2=2) < 0, -1.0, 1.0)
    r = r * sign[:, :, None]
    q = q * sign[:, None, :]
    diag = np.diagonal(r[:, :, :4], axis1=1, axis2=2)
    bad = diag.min(axis=1) < 1e-10 * np.maximum(1.0, np.abs(r).max(axis=(1, 2)))

    yt = np.stack([y[:, 0].real, y[:, 0].imag, y[:, 1].real, y[:, 1].imag], axis=1)
    yp = np.einsum("nij,ni->nj", q, yt)
    # residuals after conditioning on every B symbol pair: (N, M^2, 4)
    sb_tab = np.stack(
        [
            s_i[np.arange(m).repeat(m)],
            s_q[np.arange(m).repeat(m)],
            s_i[np.tile(np.arange(m), m)],
            s_q[np.tile(np.arange(m), m)],
        ],
        axis=1,
    )
    u = yp[:, None, :] - np.einsum("nij,tj->nti", r[:, :, 4:], sb_tab)

    idx = np.empty((n, 4), dtype=np.int64)
    if square:
        side = len(pam)
        best_tot = np.full((n, m * m), np.inf)
        best_a = np.zeros((n, m * m, 2), dtype=np.int64)
        for blk, (u0c, u1c, c00c, c01c, c11c) in enumerate(
            ((0, 1, (0, 0), (0, 1), (1, 1)), (2, 3, (2, 2), (2, 3), (3, 3)))
        ):
            c00 = r[:, c00c[0], c00c[1]][:, None]
            c01 = r[:, c01c[0], c01c[1]][:, None]
            c11 = r[:, c11c[0], c11c[1]][:, None]
            bm = np.full((n, m * m), np.inf)
            bi = np.zeros((n, m * m), dtype=np.int64)
            for qi in range(side):
                t0 = u[:, :, u0c] - c01 * pam[qi]
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.nan_to_num(t0 / c00, nan=0.0, posinf=0.0, neginf=0.0)
                ii = np.searchsorted(mids, ratio.reshape(-1), side="left").reshape(
                    n, m * m
                )
                metric = (t0 - c00 * pam[ii]) ** 2 + (u[:, :, u1c] - c11 * pam[qi]) ** 2
                upd = metric < bm
                bm[upd] = metric[upd]
                bi[upd] = (ii * side + qi)[upd]
            if blk == 0:
                best_tot = bm.copy()
                best_a[:, :, 0] = bi
            else:
                best_tot += bm
                best_a[:, :, 1] = bi
        evals = np.full(n, 2 * m * m * side, dtype=np.int64)
    else:
        best_tot = np.zeros((n, m * m))
        best_a = np.zeros((n, m * m, 2), dtype=np.int64)
        for blk, (u0c, u1c, c00c, c01c, c11c) in enumerate(
            ((0, 1, (0, 0), (0, 1), (1, 1)), (2, 3, (2, 2), (2, 3), (3, 3)))
        ):
            c00 = r[:, c00c[0], c00c[1]][:, None, None]
            c01 = r[:, c01c[0], c01c[1]][:, None, None]
            c11 = r[:, c11c[0], c11c[1]][:, None, None]
            metric = (
                u[:, :, u0c, None] - c00 * s_i[None, None, :] - c01 * s_q[None, None, :]
            ) ** 2 + (u[:, :, u1c, None] - c11 * s_q[None, None, :]) ** 2
            best_a[:, :, blk] = np.argmin(metric, axis=2)
            best_tot += np.min(metric, axis=2)
        evals = np.full(n, 2 * m ** 3, dtype=np.int64)

    tb = np.argmin(best_tot, axis=1)
    rows = np.arange(n)
    idx[:, 0] = best_a[rows, tb, 0]
    idx[:, 1] = best_a[rows, tb, 1]
    idx[:, 2], idx[:, 3] = tb // m, tb % m

    if bad.any():
        sub = np.nonzero(bad)[0]
        idx[sub] = scheme2_exhaustive_batch(y[sub], h[sub], es, tilde1, tilde2)
        evals[sub] = m ** 4
    return idx, evals, bad
