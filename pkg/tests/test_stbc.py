"""Codeword structure, the weight-matrix algebra, and the orthogonality
relations the reduced-complexity detector depends on."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ciodrelay.constellation import CIOD_ROTATION, from_name
from ciodrelay.stbc import (
    ciod_decode_symbols,
    ciod_encode,
    hurwitz_radon,
    interleaved_pair_coords,
    scheme2_codeword,
    weight_matrices,
)

finite_complex = st.complex_numbers(
    allow_nan=False, allow_infinity=False, max_magnitude=1e6
)


def test_codeword_interleaving():
    cw = ciod_encode(1 + 2j, 3 + 4j)
    assert cw.matrix[0, 0] == 1 + 4j
    assert cw.matrix[1, 1] == 3 + 2j
    assert cw.matrix[0, 1] == 0 and cw.matrix[1, 0] == 0


def test_one_antenna_active_per_channel_use():
    cw = ciod_encode(0.3 - 0.7j, -1.1 + 0.2j)
    for col in range(2):
        assert np.count_nonzero(cw.matrix[:, col]) == 1


@settings(max_examples=60, deadline=None)
@given(finite_complex, finite_complex)
def test_encode_decode_round_trip(x1, x2):
    assert ciod_decode_symbols(ciod_encode(x1, x2)) == (x1, x2)


def test_stacked_codeword_layout():
    cw = scheme2_codeword(1j, 2, 3j, 4)
    np.testing.assert_array_equal(cw.matrix[:2], ciod_encode(1j, 2).matrix)
    np.testing.assert_array_equal(cw.matrix[2:], ciod_encode(3j, 4).matrix)


def _coords(x: complex, theta: float):
    s = x * np.exp(-1j * theta)
    return s.real, s.imag


def test_weight_matrix_reconstruction(rng):
    # the codeword is real-linear in the derotated symbol coordinates
    ws = weight_matrices()
    basis = ws.ordered()
    for _ in range(50):
        xs = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        coeffs = [v for x in xs for v in _coords(complex(x), CIOD_ROTATION)]
        lin = sum(c * w for c, w in zip(coeffs, basis))
        ref = scheme2_codeword(*xs).matrix
        assert np.abs(lin - ref).max() < 1e-12


def test_cross_symbol_pairs_are_hurwitz_radon():
    basis = weight_matrices().ordered()
    for base in (0, 4):
        for i in (0, 1):
            for j in (2, 3):
                assert hurwitz_radon(basis[base + i], basis[base + j])


def test_other_pairs_are_not_hurwitz_radon():
    ws = weight_matrices()
    assert not hurwitz_radon(ws.w_a1i, ws.w_a1q)   # same-symbol pair
    assert not hurwitz_radon(ws.w_a1i, ws.w_b1i)   # cross-node pair


def test_hurwitz_radon_shape_check():
    with pytest.raises(ValueError):
        hurwitz_radon(np.zeros((4, 2)), np.zeros((2, 2)))


def test_interleaved_pair_coords(c4):
    pts = c4.point_array()
    t1, t2 = interleaved_pair_coords(pts)
    m = len(pts)
    for t in range(m * m):
        i1, i2 = divmod(t, m)
        assert t1[t] == pts[i1].real + 1j * pts[i2].imag
        assert t2[t] == pts[i2].real + 1j * pts[i1].imag


def test_full_diversity_over_rotated_4qam(c4):
    # every distinct codeword pair differs in a full-rank (diagonal) matrix
    pts = c4.point_array()
    dets = []
    for a1 in pts:
        for a2 in pts:
            for b1 in pts:
                for b2 in pts:
                    d = ciod_encode(a1, a2).matrix - ciod_encode(b1, b2).matrix
                    if np.abs(d).max() > 0:
                        dets.append(abs(d[0, 0] * d[1, 1]))
    assert min(dets) > 0.5  # well clear of zero at the design rotation
