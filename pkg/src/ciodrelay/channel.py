"""Quasi-static fading and receiver noise for every link in a protocol round.

One ChannelRealization is held fixed across the two multiple-access and two
broadcast slots of a round, then redrawn.  SNR bookkeeping follows Es/sigma^2
with CN(0, sigma^2) noise split evenly between real and imaginary parts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseModel:
    """Noise variance per complex sample and the average transmit energy."""

    sigma2: float
    es: float = 1.0

    def __post_init__(self):
        if self.sigma2 <= 0 or self.es <= 0:
            raise ValueError("sigma2 and es must be positive")

    @property
    def snr(self) -> float:
        return self.es / self.sigma2

    @classmethod
    def from_snr_db(cls, snr_db: float, es: float = 1.0) -> "NoiseModel":
        return cls(sigma2=es / 10.0 ** (snr_db / 10.0), es=es)


@dataclass(frozen=True)
class ChannelRealization:
    """Fade coefficients for one coherence block.

    ma_coeffs has length 2 (h_AR, h_BR) for single-antenna multiple access and
    length 4 (h_A1R, h_A2R, h_B1R, h_B2R) when both nodes transmit CIOD
    codewords; bc_coeffs_* are the relay-to-node pairs used in the broadcast
    phase.
    """

    ma_coeffs: np.ndarray
    bc_coeffs_a: np.ndarray
    bc_coeffs_b: np.ndarray

    def __post_init__(self):
        for arr in (self.ma_coeffs, self.bc_coeffs_a, self.bc_coeffs_b):
            if not np.all(np.isfinite(np.asarray(arr).view(np.float64))):
                raise ValueError("fade coefficients must be finite")


def cn_samples(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with total variance var."""
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def rician_samples(rng: np.random.Generator, shape, k: float) -> np.ndarray:
    """Unit-mean-power Rician fades: sqrt(K/(K+1)) + X_c/sqrt(K+1), X_c ~ CN(0,1)."""
    if k < 0:
        raise ValueError(f"Rician factor K must be non-negative, got {k}")
    los = math.sqrt(k / (k + 1.0))
    return los + cn_samples(rng, shape) / math.sqrt(k + 1.0)


def draw_realization(
    scheme: str,
    fading: str,
    k: float,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw independent fades for the MA links and both BC links.

    scheme "one" uses one coefficient per MA link; scheme "two" uses one per
    transmit antenna.  fading "rayleigh" is "rician" with K = 0.
    """
    if fading == "rayleigh":
        k = 0.0
    elif fading != "rician":
        raise ValueError(f"unknown fading model {fading!r}")
    if scheme == "one":
        n_ma = 2
    elif scheme == "two":
        n_ma = 4
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ChannelRealization(
        ma_coeffs=rician_samples(rng, n_ma, k),
        bc_coeffs_a=rician_samples(rng, 2, k),
        bc_coeffs_b=rician_samples(rng, 2, k),
    )


def transmit(
    h: np.ndarray,
    x: np.ndarray,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> np.ndarray:
    """Receive sqrt(Es) * h @ X + z across one coherence block.

    h is a row of fade coefficients (one per transmit antenna/node); X has one
    row per transmitter and one column per channel use.
    """
    h = np.asarray(h, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    if h.ndim != 1 or x.ndim != 2 or h.shape[0] != x.shape[0]:
        raise ValueError(f"incompatible shapes h{h.shape} X{x.shape}")
    z = cn_samples(rng, x.shape[1], noise.sigma2)
    return math.sqrt(noise.es) * (h @ x) + z
