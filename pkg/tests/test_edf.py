import struct

import numpy as np
import pytest

from motordecode import edf
from motordecode.errors import (
    ConfigError,
    DataError,
    EdfIntegrityError,
    EdfParseError,
    EventDecodeError,
)

from conftest import MONTAGE_FILE_LABELS, build_edf_bytes


def reference_decode(blob):
    """Independent struct-based EDF decoder used as the parsing oracle."""
    n_signals = int(blob[252:256].decode().strip())
    n_records = int(blob[236:244].decode().strip())
    header_len = 256 + 256 * n_signals

    def col(offset, size):
        base = 256 + n_signals * offset
        return [blob[base + i * size: base + (i + 1) * size].decode()
                for i in range(n_signals)]

    labels = col(0, 16)
    pmin = [float(v) for v in col(104, 8)]
    pmax = [float(v) for v in col(112, 8)]
    dmin = [int(v) for v in col(120, 8)]
    dmax = [int(v) for v in col(128, 8)]
    spr = [int(v) for v in col(216, 8)]

    signals = {i: [] for i in range(n_signals)}
    pos = header_len
    for _ in range(n_records):
        for i in range(n_signals):
            raw = blob[pos: pos + 2 * spr[i]]
            pos += 2 * spr[i]
            if "Annotations" in labels[i]:
                continue
            values = struct.unpack(f"<{spr[i]}h", raw)
            scale = (pmax[i] - pmin[i]) / (dmax[i] - dmin[i])
            signals[i].extend((v - dmin[i]) * scale + pmin[i] for v in values)
    return {labels[i].strip(): np.array(signals[i])
            for i in range(n_signals) if "Annotations" not in labels[i]}


def test_parse_matches_reference_decoder():
    for seed in (0, 1, 2):
        blob, original = build_edf_bytes(seed=seed)
        record = edf.parse_record(blob)
        reference = reference_decode(blob)
        for i, label in enumerate(MONTAGE_FILE_LABELS):
            ref = reference[label.strip()]
            np.testing.assert_allclose(record.data[i], ref, rtol=0, atol=1e-12)


def test_parse_basicstructure(sample_edf):
    blob, original = sample_edf
    record = edf.parse_record(blob, record_id="S001R03")
    assert record.labels == ["FC3", "FCZ", "FC4", "C3", "C1", "CZ", "C2", "C4"]
    assert record.fs == 160.0
    assert record.n_samples == original.shape[1]
    assert [e.side for e in record.events] == [edf.Side.LEFT, edf.Side.RIGHT]
    # quantization error bounded by half an LSB of the widest channel
    worst_gain = max(s.gain() for s in record.header.signals[:-1])
    assert np.max(np.abs(record.data - original)) <= worst_gain * 0.5 + 1e-12


def test_digital_min_maps_to_physical_min_exactly():
    labels = ["C3.."]
    data = np.zeros((1, 160))
    blob = edf.write_edf(labels, data, 160.0, [(0.0, 0.5, "T0")])
    record = edf.parse_record(blob)
    sig = record.header.signals[0]
    # overwrite first sample with digital_min and reparse
    header_len = record.header.header_bytes
    patched = bytearray(blob)
    patched[header_len:header_len + 2] = struct.pack("<h", sig.digital_min)
    reparsed = edf.parse_record(bytes(patched))
    assert reparsed.data[0, 0] == sig.physical_min


def test_zero_data_records():
    labels = ["C3.."]
    blob = edf.write_edf(labels, np.zeros((1, 0)), 160.0, [])
    record = edf.parse_record(blob)
    assert record.n_samples == 0
    assert record.events == []


def test_header_roundtrip_is_byte_exact(sample_edf):
    blob, _ = sample_edf
    record = edf.parse_record(blob)
    assert edf.serialize_header(record.header) == blob[: record.header.header_bytes]


def test_canonical_header_roundtrip():
    blob, _ = build_edf_bytes(seed=3)
    header = edf.parse_header(blob)
    header.raw = None  # force canonical serialization
    rebuilt = edf.parse_header(edf.serialize_header(header))
    assert rebuilt.n_data_records == header.n_data_records
    assert rebuilt.record_duration_s == header.record_duration_s
    assert [s.label for s in rebuilt.signals] == [s.label for s in header.signals]
    assert [s.physical_min for s in rebuilt.signals] == [
        s.physical_min for s in header.signals
    ]


def test_truncated_file_names_offset(sample_edf):
    blob, _ = sample_edf
    with pytest.raises(EdfParseError) as err:
        edf.parse_record(blob[:100])
    assert err.value.offset is not None


def test_payload_size_mismatch_is_integrity_error(sample_edf):
    blob, _ = sample_edf
    with pytest.raises(EdfIntegrityError):
        edf.parse_record(blob[:-10])


def test_declared_header_size_mismatch(sample_edf):
    blob, _ = sample_edf
    patched = bytearray(blob)
    patched[184:192] = b"9999    "
    with pytest.raises(EdfIntegrityError):
        edf.parse_record(bytes(patched))


def test_missing_annotation_signal_is_error():
    # hand-build a header with one EEG signal and no annotation channel
    labels = ["C3.."]
    data = np.zeros((1, 160))
    blob = edf.write_edf(labels, data, 160.0, [])
    record = edf.parse_record(blob)
    header = record.header
    header.raw = None
    header.signals = header.signals[:1]
    header.n_data_records = 0
    body = edf.serialize_header(header)
    with pytest.raises(EdfIntegrityError):
        edf.parse_record(body)


def test_event_sample_count_invariant(sample_edf):
    blob, _ = sample_edf
    record = edf.parse_record(blob)
    spr = record.header.signals[0].samples_per_record
    assert record.n_samples == record.header.n_data_records * spr
    for event in record.events:
        assert event.onset_s + event.duration_s <= record.duration_s + 1e-9


def test_decode_events_mapping():
    events = edf.decode_events([(4.2, 4.1, "T1")])
    assert events == [edf.MovementEvent(4.2, 4.1, edf.Side.LEFT)]
    assert edf.decode_events([(0.0, 4.2, "T0")]) == []
    assert edf.decode_events([]) == []
    right = edf.decode_events([(1.0, 2.0, "T2")])
    assert right[0].side is edf.Side.RIGHT


def test_decode_events_sorts_and_rejects_overlap():
    events = edf.decode_events([(10.0, 2.0, "T2"), (2.0, 2.0, "T1")])
    assert [e.onset_s for e in events] == [2.0, 10.0]
    with pytest.raises(EventDecodeError):
        edf.decode_events([(0.0, 5.0, "T1"), (3.0, 4.0, "T2")])


def test_decode_events_unknown_label():
    with pytest.raises(EventDecodeError) as err:
        edf.decode_events([(0.0, 1.0, "T9")])
    assert "T9" in str(err.value)


def test_resolve_subset_paper_selection():
    spec = edf.SubsetSpec(tuple(f"S{i:03d}" for i in range(1, 7)))
    ids = edf.resolve_subset(spec)
    assert len(ids) == 18
    assert ids[0] == "S001R03"
    assert ids[-1] == "S006R11"
    assert edf.resolve_subset(edf.SubsetSpec(("S002",), (7,))) == ["S002R07"]


def test_resolve_subset_bad_subject():
    with pytest.raises(ConfigError):
        edf.SubsetSpec(("S999",))
    with pytest.raises(ConfigError):
        edf.SubsetSpec(("S001",), (15,))


def test_label_normalization():
    assert edf.normalize_label("Fc3.") == "FC3"
    assert edf.normalize_label(" C3.. ") == "C3"
    assert edf.normalize_label("CZ") == "CZ"


def test_parse_totality_fuzz_smoke():
    # The heavyweight fuzz run lives in the acceptance suite; this is a
    # quick regression guard.
    rng = np.random.default_rng(99)
    blob, _ = build_edf_bytes(seed=5, seconds=4)
    for _ in range(2000):
        choice = rng.integers(0, 3)
        if choice == 0:
            payload = rng.integers(0, 256, size=rng.integers(0, 600)).astype(np.uint8).tobytes()
        elif choice == 1:
            cut = int(rng.integers(0, len(blob)))
            payload = blob[:cut]
        else:
            mutated = bytearray(blob)
            for _ in range(int(rng.integers(1, 20))):
                mutated[int(rng.integers(0, len(mutated)))] = int(rng.integers(0, 256))
            payload = bytes(mutated)
        try:
            edf.parse_record(payload)
        except DataError:
            pass


def test_make_record_roundtrip_through_writer():
    rng = np.random.default_rng(11)
    data = rng.normal(0, 10, (8, 3200))
    ann = [(1.0, 4.1, "T1"), (9.0, 4.1, "T2")]
    record = edf.make_record(MONTAGE_FILE_LABELS, data, 160.0, ann, record_id="X")
    blob = edf.write_edf(MONTAGE_FILE_LABELS, record.data, record.fs, record.annotation_log)
    reparsed = edf.parse_record(blob)
    assert reparsed.labels == record.labels
    assert [e.side for e in reparsed.events] == [e.side for e in record.events]
    np.testing.assert_allclose(reparsed.data, record.data, atol=2e-3)
