"""Coordinate-interleaved orthogonal designs and their weight-matrix algebra.

A CIOD codeword sends the in-phase part of one symbol and the quadrature part
of another through each antenna; the diagonal structure keeps a single antenna
active per channel use and makes the code single-symbol ML decodable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .constellation import CIOD_ROTATION


@dataclass(frozen=True)
class CiodCodeword:
    """2x2 diagonal codeword; rows are antennas, columns are channel uses."""

    matrix: np.ndarray
    source_symbols: Tuple[complex, complex]


@dataclass(frozen=True)
class SchemeTwoCodeword:
    """4x2 vertical stack of the two end nodes' CIOD codewords."""

    matrix: np.ndarray


@dataclass(frozen=True)
class WeightMatrixSet:
    """The eight 4x2 matrices expressing the stacked codeword as a real-linear
    combination of the un-rotated symbol coordinates."""

    w_a1i: np.ndarray
    w_a1q: np.ndarray
    w_a2i: np.ndarray
    w_a2q: np.ndarray
    w_b1i: np.ndarray
    w_b1q: np.ndarray
    w_b2i: np.ndarray
    w_b2q: np.ndarray

    def ordered(self):
        """Basis in the coordinate ordering [A1I, A1Q, A2I, A2Q, B1I, ...Q]."""
        return [
            self.w_a1i, self.w_a1q, self.w_a2i, self.w_a2q,
            self.w_b1i, self.w_b1q, self.w_b2i, self.w_b2q,
        ]


def ciod_encode(x1: complex, x2: complex) -> CiodCodeword:
    """Interleave (x1, x2) into the diagonal codeword diag(x1I + j x2Q, x2I + j x1Q)."""
    m = np.zeros((2, 2), dtype=np.complex128)
    m[0, 0] = x1.real + 1j * x2.imag
    m[1, 1] = x2.real + 1j * x1.imag
    return CiodCodeword(m, (complex(x1), complex(x2)))


def ciod_decode_symbols(cw: CiodCodeword) -> Tuple[complex, complex]:
    """Deinterleave a codeword back into its two source symbols."""
    m = cw.matrix
    x1 = m[0, 0].real + 1j * m[1, 1].imag
    x2 = m[1, 1].real + 1j * m[0, 0].imag
    return complex(x1), complex(x2)


def scheme2_codeword(xa1: complex, xa2: complex, xb1: complex, xb2: complex) -> SchemeTwoCodeword:
    """Stack node A's codeword over node B's."""
    top = ciod_encode(xa1, xa2).matrix
    bot = ciod_encode(xb1, xb2).matrix
    return SchemeTwoCodeword(np.vstack([top, bot]))


def weight_matrices(theta: float = CIOD_ROTATION) -> WeightMatrixSet:
    """Weight-matrix basis for symbols rotated by `theta`.

    The real coefficients multiplying these matrices are the coordinates of
    the un-rotated symbols, so the rotation is folded into the basis.
    """
    ct, st = math.cos(theta), math.sin(theta)

    def block(m00, m11, rows):
        w = np.zeros((4, 2), dtype=np.complex128)
        w[rows, 0] = m00
        w[rows + 1, 1] = m11
        return w

    mats = {}
    for prefix, rows in (("a", 0), ("b", 2)):
        mats[f"w_{prefix}1i"] = block(ct, 1j * st, rows)
        mats[f"w_{prefix}1q"] = block(-st, 1j * ct, rows)
        mats[f"w_{prefix}2i"] = block(1j * st, ct, rows)
        mats[f"w_{prefix}2q"] = block(1j * ct, -st, rows)
    return WeightMatrixSet(**mats)


def interleaved_pair_coords(points: np.ndarray):
    """Per-slot interleaved symbols for every ordered symbol pair.

    For pair index t = M*i1 + i2, slot 1 carries points[i1].real +
    j*points[i2].imag and slot 2 carries points[i2].real + j*points[i1].imag.
    """
    points = np.asarray(points, dtype=np.complex128)
    m = len(points)
    i1, i2 = np.divmod(np.arange(m * m), m)
    tilde1 = points.real[i1] + 1j * points.imag[i2]
    tilde2 = points.real[i2] + 1j * points.imag[i1]
    return tilde1, tilde2


def hurwitz_radon(m1: np.ndarray, m2: np.ndarray, tol: float = 1e-12) -> bool:
    """True iff M1 M2^H + M2 M1^H = 0 elementwise within tol."""
    m1 = np.asarray(m1, dtype=np.complex128)
    m2 = np.asarray(m2, dtype=np.complex128)
    if m1.shape != m2.shape:
        raise ValueError(f"shape mismatch: {m1.shape} vs {m2.shape}")
    acc = m1 @ m2.conj().T + m2 @ m1.conj().T
    return bool(np.abs(acc).max() <= tol)
