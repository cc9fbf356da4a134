"""Offline toolkit for classifying left vs right fist-movement EEG trials.

The processing chain: EDF+ ingestion -> broadband filtering -> BSS-based
artifact removal -> event-locked epoching and rhythm isolation -> per-dataset
ICA -> mean/power/energy features -> NN and Anova-kernel SVM evaluation with
repeated random 80/20 splits.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    EdfIntegrityError,
    EdfParseError,
    EventDecodeError,
    MotordecodeError,
)

__all__ = [
    "__version__",
    "MotordecodeError",
    "ConfigError",
    "DataError",
    "EdfParseError",
    "EdfIntegrityError",
    "EventDecodeError",
    "ConvergenceError",
]
