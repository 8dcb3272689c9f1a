"""CPU reference implementation of a unified change-detection stack.

The heavy lifting lives in the compiled ``_core`` extension; this package
just re-exports its surface.
"""

from ._core import (
    ConfigError,
    DataError,
    Model,
    ShapeError,
    binary_scores,
    cross_entropy,
    fft2d,
    generate_dataset,
    ifft2d_real,
    lovasz_softmax,
    scan_to_seq,
    scd_scores,
    selective_scan,
    seq_to_spatial,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "ShapeError",
    "binary_scores",
    "cross_entropy",
    "fft2d",
    "generate_dataset",
    "ifft2d_real",
    "lovasz_softmax",
    "scan_to_seq",
    "scd_scores",
    "selective_scan",
    "seq_to_spatial",
]
