"""Relay-side and end-node detectors.

Includes the exhaustive joint ML over both nodes' symbol pairs, the
QR-structured conditional ML that decodes one node's symbols independently
after conditioning on the other's, single-symbol decoding of the broadcast
CIOD codeword at the end nodes, and point-to-point SEP baselines.

Tie-breaking convention shared by every decoder here: candidates are scanned
in lexicographic (i_B1, i_B2, i_A1, i_A2) order with strict-less-than updates,
so the exhaustive and conditional decoders resolve exact metric ties to the
same decision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import integrate

from .constellation import Constellation
from .netcode import NetworkCodeMap
from .stbc import interleaved_pair_coords

# Entries of the 4x8 R factor forced to zero: the strictly-lower triangle of
# the left 4x4 block by the QR construction, and the (0..1, 2..3) block by the
# Hurwitz-Radon orthogonality of the within-node weight-matrix pairs.
STRUCTURAL_ZEROS = frozenset(
    {(0, 2), (0, 3), (1, 2), (1, 3)}
    | {(i, j) for i in range(4) for j in range(4) if j < i}
)


class DecodingContractError(Exception):
    """The decoder inputs violate the map/own-symbol contract."""


@dataclass(frozen=True)
class QrFactorization:
    """QR factors of the real equivalent channel after derotation."""

    q: np.ndarray  # 4x4 real orthogonal
    r: np.ndarray  # 4x8 real, [R1 R2] with R1 upper triangular
    structural_zeros: frozenset = STRUCTURAL_ZEROS


@dataclass
class DecodeInfo:
    """Instrumentation attached to a relay decode."""

    metric_evals: int
    path: str  # "exhaustive" | "arbitrary" | "square" | "fallback"
    used_fallback: bool = False


def _s_coords(c: Constellation) -> Tuple[np.ndarray, np.ndarray]:
    """Coordinates of the un-rotated symbols (the decoder's real unknowns)."""
    s = c.point_array() * np.exp(-1j * c.rotation)
    return s.real.copy(), s.imag.copy()


def equivalent_real_channel(h, es: float, rotation: float) -> np.ndarray:
    """Real 4x8 matrix H_eq V mapping the un-rotated symbol coordinates
    [sA1I sA1Q sA2I sA2Q sB1I sB1Q sB2I sB2Q] to the realified MA receive
    vector [y1I y1Q y2I y2Q], scaled by sqrt(Es)."""
    h1, h2, h3, h4 = (complex(v) for v in h)
    heq = np.array(
        [
            [h1.real, 0, 0, -h1.imag, h3.real, 0, 0, -h3.imag],
            [h1.imag, 0, 0, h1.real, h3.imag, 0, 0, h3.real],
            [0, -h2.imag, h2.real, 0, 0, -h4.imag, h4.real, 0],
            [0, h2.real, h2.imag, 0, 0, h4.real, h4.imag, 0],
        ]
    )
    ct, st = math.cos(rotation), math.sin(rotation)
    v1 = np.array([[ct, -st], [st, ct]])
    v = np.kron(np.eye(4), v1)
    return math.sqrt(es) * (heq @ v)


def _householder_qr_4x8(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Householder QR without pivoting; R's diagonal normalized non-negative."""
    r = a.astype(np.float64).copy()
    q = np.eye(4)
    for k in range(4):
        x = r[k:, k].copy()
        normx = math.sqrt(float(x @ x))
        if normx == 0.0:
            continue
        alpha = -normx if x[0] >= 0 else normx
        x[0] -= alpha
        beta = x @ x
        if beta == 0.0:
            continue
        w = (2.0 / beta) * x
        r[k:, k:] -= np.outer(w, x @ r[k:, k:])
        q[:, k:] -= np.outer(q[:, k:] @ x, w)
    sign = np.where(np.diagonal(r[:, :4]) < 0, -1.0, 1.0)
    r *= sign[:, None]
    q *= sign[None, :]
    # the sub-diagonal of R1 is zero by construction; store it exactly
    for i in range(4):
        r[i, :i] = 0.0
    return q, r


def conditional_qr(h, es: float, rotation: float) -> QrFactorization:
    """QR-factorize the real equivalent channel in the fixed coordinate order
    (no pivoting, so the structural zero pattern is preserved)."""
    q, r = _householder_qr_4x8(equivalent_real_channel(h, es, rotation))
    return QrFactorization(q=q, r=r)


# ---------------------------------------------------------------------------
# relay detectors


def relay_ml_siso(
    y: complex, h_ar: complex, h_br: complex, es: float, c: Constellation
) -> Tuple[complex, complex]:
    """Joint ML over both senders' symbols for one superposed MA slot."""
    pts = c.point_array()
    sq = math.sqrt(es)
    cand = sq * (h_ar * pts[:, None] + h_br * pts[None, :])
    metric = np.abs(y - cand) ** 2
    flat = int(np.argmin(metric))  # first minimum = lexicographic (i_a, i_b)
    ia, ib = divmod(flat, c.size)
    return complex(pts[ia]), complex(pts[ib])


def _ma_tilde_metric(y, h, es, tilde1, tilde2):
    """Per-(t_a, t_b) joint metric of the stacked-codeword MA reception."""
    sq = math.sqrt(es)
    y1, y2 = complex(y[0]), complex(y[1])
    h1, h2, h3, h4 = (complex(v) for v in h)
    m1 = np.abs(y1 - sq * (h1 * tilde1[:, None] + h3 * tilde1[None, :])) ** 2
    m2 = np.abs(y2 - sq * (h2 * tilde2[:, None] + h4 * tilde2[None, :])) ** 2
    return m1 + m2  # indexed [t_a, t_b]


def relay_ml_scheme2_exhaustive(
    y, h, es: float, c: Constellation, with_info: bool = False
):
    """Brute-force joint ML over all M^4 symbol quadruples."""
    ma = np.asarray(getattr(h, "ma_coeffs", h), dtype=np.complex128)
    pts = c.point_array()
    m = c.size
    tilde1, tilde2 = interleaved_pair_coords(pts)
    metric = _ma_tilde_metric(y, ma, es, tilde1, tilde2)
    # scan t_b-major so ties resolve like the conditional decoder
    flat = int(np.argmin(metric.T.reshape(-1)))
    tb, ta = divmod(flat, m * m)
    ia1, ia2 = divmod(ta, m)
    ib1, ib2 = divmod(tb, m)
    result = (
        complex(pts[ia1]), complex(pts[ia2]), complex(pts[ib1]), complex(pts[ib2])
    )
    if with_info:
        return result, DecodeInfo(metric_evals=m ** 4, path="exhaustive")
    return result


def relay_ml_scheme2_conditional(
    y,
    h,
    es: float,
    c: Constellation,
    path: str = "auto",
    with_info: bool = False,
    _reverse_scan: bool = False,
):
    """Conditional ML: condition on node B's two symbols and decode node A's
    two symbols independently via the QR-structured real channel.

    For square QAM the in-phase coordinate of each A symbol is sliced from the
    quadrature hypothesis, cutting the metric evaluations to 2*M^2*sqrt(M);
    the generic path uses 2*M^3.  `path` is keyed on the constellation kind
    flag, not inferred from the point geometry.
    """
    ma = np.asarray(getattr(h, "ma_coeffs", h), dtype=np.complex128)
    pts = c.point_array()
    m = c.size
    if path == "auto":
        path = "square" if c.kind == "square_qam" else "arbitrary"
    if path not in ("square", "arbitrary"):
        raise ValueError(f"unknown decoding path {path!r}")

    hteq = equivalent_real_channel(ma, es, c.rotation)
    q, r = _householder_qr_4x8(hteq)
    diag = np.diagonal(r[:, :4])
    if np.min(diag) < 1e-10 * max(1.0, float(np.abs(r).max())):
        result, info = relay_ml_scheme2_exhaustive(y, ma, es, c, with_info=True)
        info.path = "fallback"
        info.used_fallback = True
        return (result, info) if with_info else result

    s_i, s_q = _s_coords(c)
    yt = np.array(
        [complex(y[0]).real, complex(y[0]).imag, complex(y[1]).real, complex(y[1]).imag]
    )
    yp = q.T @ yt
    r2 = r[:, 4:]

    if path == "square":
        side = int(round(math.sqrt(m)))
        pam = np.unique(np.round(s_i, 12))  # ascending PAM levels
        mids = (pam[:-1] + pam[1:]) / 2.0

    best = math.inf
    best_idx = None
    evals = 0
    b_order = range(m * m) if not _reverse_scan else range(m * m - 1, -1, -1)
    for tb in b_order:
        ib1, ib2 = divmod(tb, m)
        sb = np.array([s_i[ib1], s_q[ib1], s_i[ib2], s_q[ib2]])
        u = yp - r2 @ sb
        block = []
        for u0, u1, c00, c01, c11 in (
            (u[0], u[1], r[0, 0], r[0, 1], r[1, 1]),
            (u[2], u[3], r[2, 2], r[2, 3], r[3, 3]),
        ):
            bm, bi = math.inf, -1
            if path == "arbitrary":
                for ia in range(m):
                    metric = (u0 - c00 * s_i[ia] - c01 * s_q[ia]) ** 2 + (
                        u1 - c11 * s_q[ia]
                    ) ** 2
                    evals += 1
                    if metric < bm:
                        bm, bi = metric, ia
            else:
                for qi in range(side):
                    sqv = pam[qi]
                    t0 = u0 - c01 * sqv
                    ii = int(np.searchsorted(mids, t0 / c00, side="left"))
                    metric = (t0 - c00 * pam[ii]) ** 2 + (u1 - c11 * sqv) ** 2
                    evals += 1
                    if metric < bm:
                        bm, bi = metric, ii * side + qi
            block.append((bm, bi))
        total = block[0][0] + block[1][0]
        if total < best:
            best = total
            best_idx = (block[0][1], block[1][1], ib1, ib2)
    ia1, ia2, ib1, ib2 = best_idx
    result = (
        complex(pts[ia1]), complex(pts[ia2]), complex(pts[ib1]), complex(pts[ib2])
    )
    if with_info:
        return result, DecodeInfo(metric_evals=evals, path=path)
    return result


# ---------------------------------------------------------------------------
# end-node broadcast decoding


def ciod_symbol_metrics(y, h, es: float, points: np.ndarray):
    """Per-symbol ML metrics of a CIOD broadcast: the joint codeword metric
    separates into one term per interleaved symbol after channel compensation."""
    y1, y2 = complex(y[0]), complex(y[1])
    h1, h2 = complex(h[0]), complex(h[1])
    sq = math.sqrt(es)
    c1 = np.conj(y1) * h1
    c2 = np.conj(y2) * h2
    p_i, p_q = points.real, points.imag
    e1, e2 = es * abs(h1) ** 2, es * abs(h2) ** 2
    m1 = e1 * p_i ** 2 - 2 * sq * c1.real * p_i + e2 * p_q ** 2 + 2 * sq * c2.imag * p_q
    m2 = e2 * p_i ** 2 - 2 * sq * c2.real * p_i + e1 * p_q ** 2 + 2 * sq * c1.imag * p_q
    return m1, m2


def ciod_ml_symbols(y, h, es: float, points: np.ndarray) -> Tuple[int, int]:
    """Single-symbol ML decode of both interleaved symbols (index pair)."""
    m1, m2 = ciod_symbol_metrics(y, h, es, np.asarray(points, dtype=np.complex128))
    return int(np.argmin(m1)), int(np.argmin(m2))


def ciod_ml_pair_exhaustive(y, h, es: float, points: np.ndarray) -> Tuple[int, int]:
    """Joint ML over all ordered symbol pairs; oracle for the separable form."""
    pts = np.asarray(points, dtype=np.complex128)
    y1, y2 = complex(y[0]), complex(y[1])
    h1, h2 = complex(h[0]), complex(h[1])
    sq = math.sqrt(es)
    t1 = pts.real[:, None] + 1j * pts.imag[None, :]  # x1I + j x2Q, [i1, i2]
    t2 = pts.real[None, :] + 1j * pts.imag[:, None]  # x2I + j x1Q
    metric = np.abs(y1 - sq * h1 * t1) ** 2 + np.abs(y2 - sq * h2 * t2) ** 2
    flat = int(np.argmin(metric))
    return flat // len(pts), flat % len(pts)


def _own_indices(own_symbols, c: Constellation):
    pts = c.point_array()
    idx = []
    for s in own_symbols:
        dist = np.abs(pts - complex(s))
        i = int(np.argmin(dist))
        if dist[i] > 1e-9:
            raise DecodingContractError(
                f"own symbol {s!r} not found in map input set {c.name}"
            )
        idx.append(i)
    return idx


def endnode_decode_ciod(
    y,
    h,
    es: float,
    own_symbols,
    m: NetworkCodeMap,
    bc_set: Optional[Constellation] = None,
    node: str = "a",
) -> tuple:
    """Decode the partner's symbols from the relay's CIOD broadcast.

    The relay output pair is ML-decoded restricted to the outputs reachable
    given this node's own symbols (one map row for node A, one column for
    node B), which by the exclusive law is in bijection with the partner's
    symbols, so the map inversion is immediate.
    """
    if node not in ("a", "b"):
        raise DecodingContractError(f"node must be 'a' or 'b', got {node!r}")
    if bc_set is not None and (
        bc_set.size != m.output_set.size
        or not np.allclose(bc_set.point_array(), m.output_set.point_array())
    ):
        raise DecodingContractError("bc_set differs from the map's output set")
    out_pts = m.output_set.point_array()
    met1, met2 = ciod_symbol_metrics(y, h, es, out_pts)
    src = m.input_set
    n = src.size
    own_idx = _own_indices(own_symbols, src)
    table = m.table if node == "a" else m.table.T
    if m.arity == 2:
        if len(own_idx) != 2:
            raise DecodingContractError("arity-2 maps need one own symbol per slot")
        row1 = table[own_idx[0], :]
        row2 = table[own_idx[1], :]
        ib1 = int(np.argmin(met1[row1]))
        ib2 = int(np.argmin(met2[row2]))
        return complex(src.points[ib1]), complex(src.points[ib2])
    if m.arity == 4:
        if len(own_idx) != 2:
            raise DecodingContractError("arity-4 maps need the own symbol pair")
        k = m.output_set.size
        row = table[own_idx[0] * n + own_idx[1], :]
        total = met1[row // k] + met2[row % k]
        tb = int(np.argmin(total))
        ib1, ib2 = divmod(tb, n)
        return complex(src.points[ib1]), complex(src.points[ib2])
    raise DecodingContractError(f"unsupported map arity {m.arity}")


# ---------------------------------------------------------------------------
# point-to-point baselines


def _mpsk_rayleigh_sep(m: int, snr: float) -> float:
    g = math.sin(math.pi / m) ** 2

    def integrand(phi):
        s = math.sin(phi) ** 2
        return s / (s + snr * g)

    val, _ = integrate.quad(integrand, 0.0, math.pi * (m - 1) / m, limit=200)
    return val / math.pi


def _generic_rayleigh_sep(c: Constellation, snr: float) -> float:
    # AWGN SEP by Gauss-Hermite quadrature over the noise, averaged over the
    # Rayleigh power via Gauss-Laguerre; adequate for the small sets used here.
    pts = c.point_array()
    gh_x, gh_w = np.polynomial.hermite.hermgauss(48)
    gl_x, gl_w = np.polynomial.laguerre.laggauss(48)
    sep = 0.0
    for t, wt in zip(gl_x, gl_w):
        gamma = snr * t
        sigma = math.sqrt(1.0 / (2.0 * gamma))
        noise = math.sqrt(2.0) * sigma * (gh_x[:, None] + 1j * gh_x[None, :])
        w2 = (gh_w[:, None] * gh_w[None, :]) / math.pi
        correct = 0.0
        for i, p in enumerate(pts):
            rx = p + noise
            nearest = np.argmin(np.abs(rx[..., None] - pts[None, None, :]), axis=-1)
            correct += float(np.sum(w2 * (nearest == i)))
        sep += wt * (1.0 - correct / len(pts))
    return sep


def p2p_sep_theoretical(c: Constellation, snr_db: float, fading: str = "rayleigh") -> float:
    """Average SEP of a single point-to-point fading link using the set c.

    Exact single-integral forms cover 4-QAM (as 4-PSK) and PSK sets; other
    sets fall back to nested quadrature over noise and fade power.
    """
    if fading != "rayleigh":
        raise ValueError(f"only rayleigh fading is supported, got {fading!r}")
    snr = 10.0 ** (snr_db / 10.0)
    if c.kind == "psk" or (c.kind == "square_qam" and c.size == 4):
        return _mpsk_rayleigh_sep(c.size, snr)
    return _generic_rayleigh_sep(c, snr)
