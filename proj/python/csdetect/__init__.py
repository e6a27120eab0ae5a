"""Cell detection by compressed sensing of annotation maps.

Arrays follow the C++ library: cell coordinates are 1-based (x, y) rows,
images are (height, width) float arrays in [0, 1], and detections are
(x, y, support) rows.
"""

from ._core import (
    AxisLayout,
    ConfigError,
    InfeasibleParams,
    SensingMatrix,
    bp_recover,
    build_axis_layout,
    check_config,
    decode_scheme2,
    default_config,
    empirical_rip_check,
    encode_scheme1,
    encode_scheme2,
    ensemble,
    generate_image,
    make_sensing_matrix,
    match_detections,
    merge_ensemble,
    minimum_rows,
    omp_recover,
    oracle_predict,
    prf1,
    run,
    synth,
    train,
)

__all__ = [
    "AxisLayout",
    "ConfigError",
    "InfeasibleParams",
    "SensingMatrix",
    "bp_recover",
    "build_axis_layout",
    "check_config",
    "decode_scheme2",
    "default_config",
    "empirical_rip_check",
    "encode_scheme1",
    "encode_scheme2",
    "ensemble",
    "generate_image",
    "make_sensing_matrix",
    "match_detections",
    "merge_ensemble",
    "minimum_rows",
    "omp_recover",
    "oracle_predict",
    "prf1",
    "run",
    "synth",
    "train",
]
