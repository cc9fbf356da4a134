import numpy as np
import pytest

from motordecode import edf

MONTAGE_FILE_LABELS = ["Fc3.", "Fcz.", "Fc4.", "C3..", "C1..", "Cz..", "C2..", "C4.."]


def build_edf_bytes(seed=0, n_channels=8, seconds=20, fs=160.0, annotations=None,
                    amplitude=30.0):
    """A well-formed EDF+ test file with labeled cues."""
    rng = np.random.default_rng(seed)
    labels = (MONTAGE_FILE_LABELS * 8)[:n_channels]
    labels = [f"{lab[:-1]}{i}"[:16] if labels.count(lab) > 1 else lab
              for i, lab in enumerate(labels)]
    if n_channels <= 8:
        labels = MONTAGE_FILE_LABELS[:n_channels]
    data = rng.normal(0.0, amplitude, (n_channels, int(seconds * fs)))
    if annotations is None:
        annotations = [
            (0.0, 4.2, "T0"),
            (4.2, 4.1, "T1"),
            (8.4, 4.1, "T2"),
        ]
    return edf.write_edf(labels, data, fs, annotations), data


@pytest.fixture
def sample_edf():
    return build_edf_bytes()
