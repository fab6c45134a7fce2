"""Massive MIMO-OTFS downlink simulator with fractional Doppler.

Modules
-------
lattice    grids, ISFFT/SFFT, index maps
channel    sparse multipath channels and the delay-Doppler-beam ground truth
modem      OFDM-based OTFS chain and delay-Doppler operators
pilots     Zadoff-Chu pilot design, frame layout, beam/space conversion
sensing    pilot matrix, phase matrices, coherence
estimator  OMP, path extraction, ISMCE and MSMCE
harness    metrics, MMSE detection, Monte-Carlo sweeps
"""

from .channel import ChannelRealization, DominantPath, Subpath, generate_channel, ground_truth_hddb
from .errors import (
    CapacityError,
    ConfigurationError,
    DegenerateColumnError,
    InvalidRootError,
    LayoutError,
    UndefinedMetricError,
)
from .estimator import ChannelEstimate, PathInfo, extract_paths, ismce, msmce, omp_solve
from .harness import ExperimentConfig, ResultRow, nmse, run_sweep, run_trial
from .kernels import BACKEND
from .lattice import OtfsGrid, isfft, sfft
from .modem import dd_oracle, dd_simplified, transmit
from .pilots import PilotLayout, assemble_frame, design_pilots, make_layout, zc_sequence

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CapacityError",
    "ChannelEstimate",
    "ChannelRealization",
    "ConfigurationError",
    "DegenerateColumnError",
    "DominantPath",
    "ExperimentConfig",
    "InvalidRootError",
    "LayoutError",
    "OtfsGrid",
    "PathInfo",
    "PilotLayout",
    "ResultRow",
    "Subpath",
    "UndefinedMetricError",
    "assemble_frame",
    "dd_oracle",
    "dd_simplified",
    "design_pilots",
    "extract_paths",
    "generate_channel",
    "ground_truth_hddb",
    "isfft",
    "ismce",
    "make_layout",
    "msmce",
    "nmse",
    "omp_solve",
    "run_sweep",
    "run_trial",
    "sfft",
    "transmit",
    "zc_sequence",
]
