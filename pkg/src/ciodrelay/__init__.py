"""Link-level simulator for CIOD-based two-way relaying with physical-layer
network coding: constellations and rotation design, space-time encoding,
singular-fade-state map construction, relay/end-node detectors, and a Monte
Carlo SEP engine with interchangeable compiled/numpy kernels."""

from ._backend import BACKEND_NAME, get_kernels
from .channel import ChannelRealization, NoiseModel, draw_realization, transmit
from .constellation import (
    CIOD_ROTATION,
    Constellation,
    ConstellationError,
    bc_constellation,
    cpd_report,
    from_name,
    make_constellation,
)
from .decode import (
    DecodingContractError,
    ciod_ml_symbols,
    conditional_qr,
    endnode_decode_ciod,
    p2p_sep_theoretical,
    relay_ml_scheme2_conditional,
    relay_ml_scheme2_exhaustive,
    relay_ml_siso,
)
from .engine import (
    EngineError,
    ExperimentSpec,
    SepCurve,
    SepPoint,
    diversity_slope,
    estimate_sep,
    run_round_scheme1,
    run_round_scheme2,
)
from .netcode import (
    MapCatalog,
    MapConstructionError,
    NetworkCodeMap,
    SingularFadeState,
    SingularFadeSubspace,
    build_adaptive_map_scheme2,
    build_adaptive_map_siso,
    build_catalog,
    cached_catalog,
    check_exclusive_law,
    enumerate_scheme2_subspaces,
    enumerate_siso_singular_states,
    select_map,
    xor_map,
)
from .stbc import ciod_encode, hurwitz_radon, scheme2_codeword, weight_matrices

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "CIOD_ROTATION",
    "ChannelRealization",
    "Constellation",
    "ConstellationError",
    "DecodingContractError",
    "EngineError",
    "ExperimentSpec",
    "MapCatalog",
    "MapConstructionError",
    "NetworkCodeMap",
    "NoiseModel",
    "SepCurve",
    "SepPoint",
    "SingularFadeState",
    "SingularFadeSubspace",
    "bc_constellation",
    "build_adaptive_map_scheme2",
    "build_adaptive_map_siso",
    "build_catalog",
    "cached_catalog",
    "check_exclusive_law",
    "ciod_encode",
    "ciod_ml_symbols",
    "conditional_qr",
    "cpd_report",
    "diversity_slope",
    "draw_realization",
    "endnode_decode_ciod",
    "enumerate_scheme2_subspaces",
    "enumerate_siso_singular_states",
    "estimate_sep",
    "from_name",
    "get_kernels",
    "hurwitz_radon",
    "make_constellation",
    "p2p_sep_theoretical",
    "relay_ml_scheme2_conditional",
    "relay_ml_scheme2_exhaustive",
    "relay_ml_siso",
    "run_round_scheme1",
    "run_round_scheme2",
    "scheme2_codeword",
    "select_map",
    "transmit",
    "weight_matrices",
    "xor_map",
]
