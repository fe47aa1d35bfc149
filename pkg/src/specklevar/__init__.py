"""Multivariate coefficient-of-variation maps for polarimetric speckle time series."""

from . import backend
from .mcv import AZ, MULTIVARIATE, R, VN, VV, McvKind, UndefinedEstimate, mcv, pixel_stats, vmai
from .scan import EstimationMode, compute_map, compute_maps, compute_vmai_map
from .stack import (
    UNDEFINED,
    PixelStats,
    PreconditionError,
    ScalarMap,
    SpeckleStack,
    StackFormatError,
    read_map,
    read_stack,
    slice_channel,
    write_map,
    write_stack,
)

__version__ = "0.1.0"
