"""Signal-set construction, Gray labeling, and the distance measures the
rotation design is judged by."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ciodrelay.constellation import (
    CIOD_ROTATION,
    ConstellationError,
    bc_constellation,
    cpd_report,
    from_name,
    make_constellation,
)

# frozen reference values for the rotated 4-QAM design point
CPD_4QAM_ROT = 2.0 / math.sqrt(5.0)            # 0.8944271909999162
CODING_GAIN_4QAM_ROT = 8.0 / math.sqrt(5.0)    # 3.5777087639996634


def test_rotation_angle_value():
    assert CIOD_ROTATION == math.atan(2.0) / 2.0
    assert math.degrees(CIOD_ROTATION) == pytest.approx(31.71747441146101)


@pytest.mark.parametrize(
    "name", ["4qam", "4qam-rotated", "8psk", "8psk-rotated", "16qam", "16qam-rotated", "bc5"]
)
def test_unit_average_energy(name):
    pts = from_name(name).point_array()
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_cpd_at_design_rotation():
    rep = cpd_report(from_name("4qam-rotated"))
    assert rep.cpd == pytest.approx(CPD_4QAM_ROT, rel=1e-12)
    assert rep.coding_gain == pytest.approx(CODING_GAIN_4QAM_ROT, rel=1e-12)
    assert rep.min_distance == pytest.approx(math.sqrt(2.0), rel=1e-12)


def test_unrotated_square_qam_has_zero_cpd():
    # axis-aligned QAM pairs share a coordinate, so the product distance dies
    assert cpd_report(from_name("4qam")).cpd == 0.0


def test_design_rotation_beats_neighbors():
    for off in (-0.05, 0.05):
        c = make_constellation("square_qam", 4, CIOD_ROTATION + off)
        assert cpd_report(c).cpd < CPD_4QAM_ROT


def _hamming(a: str, b: str) -> int:
    return sum(x != y for x, y in zip(a, b))


def test_psk_gray_labels_adjacent_bits():
    c = from_name("8psk")
    for k in range(8):
        assert _hamming(c.labels[k], c.labels[(k + 1) % 8]) == 1


@pytest.mark.parametrize("name", ["4qam", "16qam"])
def test_square_qam_gray_labels(name):
    # nearest neighbors (axis-adjacent points) differ in exactly one bit
    c = from_name(name)
    pts = c.point_array()
    d = np.abs(pts[:, None] - pts[None, :])
    dmin = d[d > 0].min()
    for i, j in zip(*np.where(np.isclose(d, dmin))):
        if i < j:
            assert _hamming(c.labels[i], c.labels[j]) == 1


def test_labels_cover_all_bitstrings(c4):
    assert sorted(c4.labels) == ["00", "01", "10", "11"]
    assert c4.index_of_label(c4.labels[2]) == 2


def test_bc5_shape():
    c = bc_constellation()
    assert c.size == 5
    assert c.points[0] == 0j
    mags = np.abs(c.point_array()[1:])
    np.testing.assert_allclose(mags, math.sqrt(1.25), rtol=1e-12)
    rep = cpd_report(c)
    assert rep.cpd == pytest.approx(0.27950849718747378, rel=1e-12)
    assert rep.min_distance == pytest.approx(math.sqrt(5.0) / 2.0, rel=1e-12)
    assert c.labels is None
    with pytest.raises(ConstellationError):
        c.index_of_label("00")


def test_construction_errors():
    with pytest.raises(ConstellationError):
        make_constellation("square_qam", 8)  # not a perfect square
    with pytest.raises(ConstellationError):
        make_constellation("psk", 3)
    with pytest.raises(ConstellationError):
        make_constellation("hexagonal", 4)
    with pytest.raises(ConstellationError):
        from_name("64qam")


def test_from_name_rotation_override():
    c = from_name("4qam", rotation=0.3)
    assert c.rotation == 0.3
    assert from_name("4qam-rotated").rotation == CIOD_ROTATION


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False))
def test_rotation_preserves_energy_and_min_distance(theta):
    c = make_constellation("square_qam", 4, theta)
    pts = c.point_array()
    assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert cpd_report(c).min_distance == pytest.approx(math.sqrt(2.0), rel=1e-9)
