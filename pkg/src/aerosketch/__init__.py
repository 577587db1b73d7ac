"""Streaming matrix sketches with snapshot-based exact restoration.

Covariance sketches over full streams, sliding windows and persistent
(historical) queries, a sliding-window approximate matrix product, and a
simulated coordinator/site protocol, all sharing one core: an FD residual
buffer whose heavy directions are found by randomized subspace iteration
and moved into timestamped snapshots.
"""
from .amm import AdaptiveAeroSketchCOD, AeroSketchCOD, CodSnapshot, MLAeroSketchCOD
from .attp import AttpSketch
from .core import AeroSketch, ExactRow, Snapshot, restore_contribution, shrink_gram
from .errors import FormatError, InvalidInput, OracleCapExceeded, ProtocolError
from .fd import FdBuffer, cod_reduce, fd_reduce, fd_stream
from .linalg import RngState, eigh, power_iteration, qr, simul_iter, svd
from .window import MLAeroSketch

__all__ = [
    "AdaptiveAeroSketchCOD",
    "AeroSketch",
    "AeroSketchCOD",
    "AttpSketch",
    "CodSnapshot",
    "ExactRow",
    "FdBuffer",
    "FormatError",
    "InvalidInput",
    "MLAeroSketch",
    "MLAeroSketchCOD",
    "OracleCapExceeded",
    "ProtocolError",
    "RngState",
    "Snapshot",
    "cod_reduce",
    "eigh",
    "fd_reduce",
    "fd_stream",
    "power_iteration",
    "qr",
    "restore_contribution",
    "shrink_gram",
    "simul_iter",
    "svd",
]

__version__ = "0.1.0"
