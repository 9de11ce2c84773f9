"""Signal sets used by the end nodes and the relay.

Square QAM and PSK sets with Gray bit labels, plus the 5-point broadcast set
used by the adaptive network-coding maps.  All sets are normalized to unit
average energy; per-symbol scaling by sqrt(Es) happens in the channel module.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# Rotation angle that maximizes the coordinate product distance of square QAM.
CIOD_ROTATION = math.atan(2.0) / 2.0


class ConstellationError(ValueError):
    """Raised when a signal set cannot be constructed as requested."""


@dataclass(frozen=True)
class Constellation:
    """A finite complex signal set with optional bit labeling.

    points are unit-average-energy complex values; labels (when present) are
    distinct bit strings of length log2(M).  kind records the family the set
    was built from so decoders can pick coordinate-separable fast paths.
    """

    name: str
    points: tuple
    labels: Optional[tuple]
    rotation: float
    kind: str  # "square_qam" | "psk" | "custom"

    @property
    def size(self) -> int:
        return len(self.points)

    def point_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.complex128)

    def index_of_label(self, label: str) -> int:
        if self.labels is None:
            raise ConstellationError(f"{self.name} has no bit labels")
        return self.labels.index(label)

    def __post_init__(self):
        pts = self.point_array()
        mean_energy = float(np.mean(np.abs(pts) ** 2))
        if abs(mean_energy - 1.0) > 1e-12:
            raise ConstellationError(
                f"average energy {mean_energy!r} differs from 1 by more than 1e-12"
            )
        if self.labels is not None:
            m = len(self.points)
            nbits = m.bit_length() - 1
            if m & (m - 1):
                raise ConstellationError("labeled sets must have power-of-2 size")
            if sorted(self.labels) != sorted(format(i, f"0{nbits}b") for i in range(m)):
                raise ConstellationError("labels must enumerate all bit strings once")


@dataclass(frozen=True)
class CpdReport:
    """Pairwise distance measures driving the CIOD design criteria."""

    cpd: float
    min_distance: float
    coding_gain: float


def _gray(n: int) -> int:
    return n ^ (n >> 1)


def _square_qam_points(m: int):
    # Levels +/-1, +/-3, ... per axis, scaled to unit average energy.
    side = int(round(math.sqrt(m)))
    levels = np.arange(side) * 2 - (side - 1)
    scale = math.sqrt(3.0 / (2.0 * (m - 1)))
    points = []
    labels = []
    bits_per_axis = side.bit_length() - 1
    for i_idx in range(side):
        for q_idx in range(side):
            points.append(scale * (levels[i_idx] + 1j * levels[q_idx]))
            labels.append(
                format(_gray(i_idx), f"0{bits_per_axis}b")
                + format(_gray(q_idx), f"0{bits_per_axis}b")
            )
    return points, labels


def _psk_points(m: int):
    nbits = m.bit_length() - 1
    points = [cmath.exp(2j * math.pi * k / m) for k in range(m)]
    labels = [format(_gray(k), f"0{nbits}b") for k in range(m)]
    return points, labels


def make_constellation(kind: str, m: int, rotation: float = 0.0) -> Constellation:
    """Build a unit-energy Gray-labeled signal set rotated by `rotation`.

    Args:
        kind: "square_qam" or "psk".
        m: set size; power of 2 (and a perfect square for square_qam).
        rotation: angle in radians applied to every point.
    """
    if m < 2 or m & (m - 1):
        raise ConstellationError(f"M={m} is not a power of 2 >= 2")
    if kind == "square_qam":
        side = int(round(math.sqrt(m)))
        if side * side != m:
            raise ConstellationError(f"M={m} is not a perfect square")
        points, labels = _square_qam_points(m)
    elif kind == "psk":
        points, labels = _psk_points(m)
    else:
        raise ConstellationError(f"unknown constellation kind {kind!r}")
    rot = cmath.exp(1j * rotation)
    points = tuple(p * rot for p in points)
    name = f"{m}{'qam' if kind == 'square_qam' else 'psk'}"
    if rotation != 0.0:
        name += "-rotated"
    return Constellation(name, points, tuple(labels), rotation, kind)


def bc_constellation(rotation: float = CIOD_ROTATION) -> Constellation:
    """The 5-point unit-energy broadcast set: {0} plus a scaled offset 4-PSK ring.

    Used when an adaptive map needs more output symbols than the source set
    provides; the ring offset plus rotation keeps every coordinate product
    distance of the non-zero points strictly positive.
    """
    ring = math.sqrt(5.0 / 4.0)
    rot = cmath.exp(1j * rotation)
    points = (0j,) + tuple(
        ring * cmath.exp(1j * (math.pi / 4 + k * math.pi / 2)) * rot for k in range(4)
    )
    return Constellation("bc5", points, None, rotation, "custom")


def cpd_report(c: Constellation) -> CpdReport:
    """Coordinate product distance, minimum distance, and CIOD coding gain.

    cpd = min |dI * dQ| over distinct pairs; the CIOD coding gain is 4*cpd,
    which at the optimal square-QAM rotation equals 4*d^2/sqrt(5).
    """
    pts = c.point_array()
    diff = pts[:, None] - pts[None, :]
    off = ~np.eye(len(pts), dtype=bool)
    prods = np.abs(diff.real * diff.imag)[off]
    dists = np.abs(diff)[off]
    cpd = float(prods.min())
    dmin = float(dists.min())
    return CpdReport(cpd=cpd, min_distance=dmin, coding_gain=4.0 * cpd)


_BASE_NAMES = {
    "4qam": ("square_qam", 4, 0.0),
    "4qam-rotated": ("square_qam", 4, CIOD_ROTATION),
    "8psk": ("psk", 8, 0.0),
    "8psk-rotated": ("psk", 8, CIOD_ROTATION),
    "16qam": ("square_qam", 16, 0.0),
    "16qam-rotated": ("square_qam", 16, CIOD_ROTATION),
}


def from_name(name: str, rotation: Optional[float] = None) -> Constellation:
    """Resolve a config-file constellation name, optionally overriding rotation."""
    if name == "bc5":
        return bc_constellation(CIOD_ROTATION if rotation is None else rotation)
    if name not in _BASE_NAMES:
        raise ConstellationError(f"unknown constellation name {name!r}")
    kind, m, rot = _BASE_NAMES[name]
    if rotation is not None:
        rot = rotation
    return make_constellation(kind, m, rot)
