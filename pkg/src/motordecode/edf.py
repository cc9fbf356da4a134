"""EDF+ reading/writing and movement-event decoding.

Implements the container format directly: fixed 256-byte main header,
256 bytes of header per signal, 16-bit little-endian two's-complement
samples, and TAL-encoded annotations. Parsing is total: any byte string
either yields a ``RawRecord`` or raises a structured ``DataError``
subclass, never an uncaught exception.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import EdfIntegrityError, EdfParseError, EventDecodeError, ConfigError

MAIN_HEADER_SIZE = 256
SIGNAL_HEADER_SIZE = 256
ANNOTATION_LABEL = "EDF Annotations"

# Executed left/right fist runs within each subject's 14-run session:
# two baselines, then three repetitions of four tasks in fixed order.
EXECUTED_FIST_RUNS = (3, 7, 11)
SUBJECT_RANGE = range(1, 110)

# Default start stamp for synthesized/canonical records (any fixed value
# keeps emitted bytes reproducible).
DEFAULT_START = datetime(2009, 8, 12, 16, 15, 0)


class Side(enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


# Dataset annotation alphabet for the executed-fist runs: T0 is rest,
# T1/T2 are the left/right cue labels.
CUE_LABELS = {"T1": Side.LEFT, "T2": Side.RIGHT}
REST_LABEL = "T0"


def normalize_label(label: str) -> str:
    """Channel label normalization: trim, strip trailing dots, uppercase."""
    return label.strip().rstrip(".").upper()


@dataclass(frozen=True)
class SignalHeader:
    label: str
    transducer: str
    dimension: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    prefiltering: str
    samples_per_record: int
    reserved: str = ""

    @property
    def is_annotation(self) -> bool:
        return self.label.strip() == ANNOTATION_LABEL

    def gain(self) -> float:
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)


@dataclass
class RecordHeader:
    version_tag: str
    patient_id: str
    recording_id: str
    start_datetime: datetime
    n_data_records: int
    record_duration_s: float
    signals: list[SignalHeader]
    reserved: str = ""
    # Original header bytes when parsed from a file; serialization returns
    # these verbatim so a parse/serialize round trip is byte-exact.
    raw: bytes | None = None

    @property
    def n_signals(self) -> int:
        return len(self.signals)

    @property
    def header_bytes(self) -> int:
        return MAIN_HEADER_SIZE + SIGNAL_HEADER_SIZE * self.n_signals


@dataclass(frozen=True)
class MovementEvent:
    onset_s: float
    duration_s: float
    side: Side

    def __post_init__(self):
        if self.onset_s < 0:
            raise EventDecodeError(f"event onset must be >= 0, got {self.onset_s}")
        if self.duration_s <= 0:
            raise EventDecodeError(f"event duration must be > 0, got {self.duration_s}")


@dataclass
class RawRecord:
    """One parsed recording: EEG channels in microvolts plus cue events.

    ``data`` is channels x samples; ``labels`` are normalized channel names
    in file order; ``annotation_log`` keeps every labeled annotation
    (including rests), while ``events`` holds only decoded movement cues.
    """

    header: RecordHeader
    labels: list[str]
    data: np.ndarray
    fs: float
    events: list[MovementEvent]
    annotation_log: list[tuple[float, float, str]]
    record_id: str = ""

    def __post_init__(self):
        if self.data.ndim != 2:
            raise EdfIntegrityError("channel data must be 2-D (channels x samples)")
        if len(self.labels) != self.data.shape[0]:
            raise EdfIntegrityError(
                f"{len(self.labels)} labels for {self.data.shape[0]} channel rows"
            )
        if self.fs <= 0:
            raise EdfIntegrityError(f"sampling rate must be positive, got {self.fs}")
        if len(set(self.labels)) != len(self.labels):
            raise EdfIntegrityError("channel labels not unique after normalization")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def channels(self):
        """Iterate (label, samples) pairs in file order."""
        return zip(self.labels, self.data)


@dataclass(frozen=True)
class SubsetSpec:
    subjects: tuple[str, ...]
    runs: tuple[int, ...] = EXECUTED_FIST_RUNS

    def __post_init__(self):
        for s in self.subjects:
            m = re.fullmatch(r"S(\d{3})", s)
            if not m or int(m.group(1)) not in SUBJECT_RANGE:
                raise ConfigError(f"unknown subject id {s!r} (expected S001..S109)")
        for r in self.runs:
            if not 1 <= int(r) <= 14:
                raise ConfigError(f"run index {r} outside 1..14")


def resolve_subset(spec: SubsetSpec) -> list[str]:
    """Expand a subject/run subset into ordered record identifiers (SxxxRyy)."""
    return [f"{subj}R{run:02d}" for subj in spec.subjects for run in spec.runs]


def record_path(data_dir: Path | str, record_id: str) -> Path:
    return Path(data_dir) / record_id[:4] / f"{record_id}.edf"


# ---------------------------------------------------------------------------
# parsing


def _ascii_field(buf: bytes, start: int, size: int) -> str:
    chunk = buf[start : start + size]
    if len(chunk) < size:
        raise EdfParseError("truncated header field", offset=start)
    try:
        return chunk.decode("ascii")
    except UnicodeDecodeError as exc:
        raise EdfParseError(f"non-ASCII bytes in header field: {exc}", offset=start) from None


def _int_field(buf: bytes, start: int, size: int, name: str) -> int:
    text = _ascii_field(buf, start, size).strip()
    try:
        return int(text) if text else 0
    except ValueError:
        raise EdfParseError(f"cannot parse {name} field {text!r} as integer", offset=start) from None


def _float_field(buf: bytes, start: int, size: int, name: str) -> float:
    text = _ascii_field(buf, start, size).strip()
    try:
        value = float(text) if text else 0.0
    except ValueError:
        raise EdfParseError(f"cannot parse {name} field {text!r} as number", offset=start) from None
    if not math.isfinite(value):
        raise EdfParseError(f"non-finite {name} field {text!r}", offset=start)
    return value


def _parse_start(buf: bytes) -> datetime:
    date_text = _ascii_field(buf, 168, 8)
    time_text = _ascii_field(buf, 176, 8)
    m = re.fullmatch(r"(\d{2})[.\-/ ](\d{2})[.\-/ ](\d{2})", date_text.strip())
    t = re.fullmatch(r"(\d{2})[.\-/ :](\d{2})[.\-/ :](\d{2})", time_text.strip())
    if not m or not t:
        raise EdfParseError(
            f"cannot parse start date/time {date_text!r} {time_text!r}", offset=168
        )
    day, month, yy = (int(g) for g in m.groups())
    year = 2000 + yy if yy < 85 else 1900 + yy
    try:
        return datetime(year, month, day, int(t.group(1)), int(t.group(2)), int(t.group(3)))
    except ValueError as exc:
        raise EdfParseError(f"invalid start date/time: {exc}", offset=168) from None


def parse_header(data: bytes) -> RecordHeader:
    """Parse the main + per-signal header block."""
    if len(data) < MAIN_HEADER_SIZE:
        raise EdfParseError(
            f"file too short for main header ({len(data)} < {MAIN_HEADER_SIZE} bytes)",
            offset=len(data),
        )
    n_signals = _int_field(data, 252, 4, "signal count")
    if n_signals < 0 or n_signals > 9999:
        raise EdfParseError(f"implausible signal count {n_signals}", offset=252)
    header_bytes = MAIN_HEADER_SIZE + SIGNAL_HEADER_SIZE * n_signals
    if len(data) < header_bytes:
        raise EdfParseError(
            f"file too short for {n_signals} signal headers "
            f"({len(data)} < {header_bytes} bytes)",
            offset=len(data),
        )
    declared_bytes = _int_field(data, 184, 8, "header size")
    if declared_bytes != header_bytes:
        raise EdfIntegrityError(
            f"declared header size {declared_bytes} != computed {header_bytes} "
            f"for {n_signals} signals"
        )

    def column(offset_in_block: int, size: int):
        base = MAIN_HEADER_SIZE + n_signals * offset_in_block
        return [(base + i * size, size) for i in range(n_signals)]

    labels = [_ascii_field(data, s, n) for s, n in column(0, 16)]
    transducers = [_ascii_field(data, s, n) for s, n in column(16, 80)]
    dimensions = [_ascii_field(data, s, n) for s, n in column(96, 8)]
    phys_min = [_float_field(data, s, n, "physical min") for s, n in column(104, 8)]
    phys_max = [_float_field(data, s, n, "physical max") for s, n in column(112, 8)]
    dig_min = [_int_field(data, s, n, "digital min") for s, n in column(120, 8)]
    dig_max = [_int_field(data, s, n, "digital max") for s, n in column(128, 8)]
    prefilter = [_ascii_field(data, s, n) for s, n in column(136, 80)]
    spr = [_int_field(data, s, n, "samples per record") for s, n in column(216, 8)]
    reserved_sig = [_ascii_field(data, s, n) for s, n in column(224, 32)]

    signals = []
    for i in range(n_signals):
        if spr[i] < 0:
            raise EdfIntegrityError(f"signal {i}: negative samples per record {spr[i]}")
        if dig_max[i] <= dig_min[i]:
            raise EdfIntegrityError(
                f"signal {i} ({labels[i].strip()!r}): digital range "
                f"[{dig_min[i]}, {dig_max[i]}] is degenerate"
            )
        signals.append(
            SignalHeader(
                label=labels[i],
                transducer=transducers[i],
                dimension=dimensions[i],
                physical_min=phys_min[i],
                physical_max=phys_max[i],
                digital_min=dig_min[i],
                digital_max=dig_max[i],
                prefiltering=prefilter[i],
                samples_per_record=spr[i],
                reserved=reserved_sig[i],
            )
        )

    header = RecordHeader(
        version_tag=_ascii_field(data, 0, 8),
        patient_id=_ascii_field(data, 8, 80),
        recording_id=_ascii_field(data, 88, 80),
        start_datetime=_parse_start(data),
        n_data_records=_int_field(data, 236, 8, "data record count"),
        record_duration_s=_float_field(data, 244, 8, "record duration"),
        signals=signals,
        reserved=_ascii_field(data, 192, 44),
        raw=bytes(data[:header_bytes]),
    )
    return header


def serialize_header(header: RecordHeader) -> bytes:
    """Serialize a header; parsed headers reproduce their original bytes."""
    if header.raw is not None:
        return header.raw

    def pad(text: str, size: int) -> bytes:
        raw = text.encode("ascii")
        if len(raw) > size:
            raise EdfIntegrityError(f"header field {text!r} longer than {size} bytes")
        return raw.ljust(size)

    out = bytearray()
    out += pad(header.version_tag or "0", 8)
    out += pad(header.patient_id, 80)
    out += pad(header.recording_id, 80)
    out += pad(header.start_datetime.strftime("%d.%m.%y"), 8)
    out += pad(header.start_datetime.strftime("%H.%M.%S"), 8)
    out += pad(str(header.header_bytes), 8)
    out += pad(header.reserved, 44)
    out += pad(str(header.n_data_records), 8)
    out += pad(format_number(header.record_duration_s), 8)
    out += pad(str(header.n_signals), 4)
    sig = header.signals
    for s in sig:
        out += pad(s.label, 16)
    for s in sig:
        out += pad(s.transducer, 80)
    for s in sig:
        out += pad(s.dimension, 8)
    for s in sig:
        out += pad(format_number(s.physical_min), 8)
    for s in sig:
        out += pad(format_number(s.physical_max), 8)
    for s in sig:
        out += pad(str(s.digital_min), 8)
    for s in sig:
        out += pad(str(s.digital_max), 8)
    for s in sig:
        out += pad(s.prefiltering, 80)
    for s in sig:
        out += pad(str(s.samples_per_record), 8)
    for s in sig:
        out += pad(s.reserved, 32)
    return bytes(out)


def format_number(value: float) -> str:
    """Render a number into <=8 ASCII chars, exact for the values we emit."""
    if value == int(value) and abs(value) < 1e7:
        return str(int(value))
    text = f"{value:.8g}"
    if len(text) > 8:
        text = f"{value:.6g}"
    if len(text) > 8:
        raise EdfIntegrityError(f"numeric field {value!r} does not fit in 8 chars")
    return text


TAL_DELIM = 0x14
TAL_DURATION = 0x15


def _parse_tal_block(block: bytes, record_index: int) -> list[tuple[float, float, str]]:
    """Decode one record's annotation bytes into (onset, duration, label) rows."""
    entries = []
    pos = 0
    n = len(block)
    while pos < n:
        if block[pos] == 0:
            pos += 1
            continue
        end = block.find(b"\x00", pos)
        if end == -1:
            raise EdfParseError(
                f"unterminated annotation in record {record_index}", offset=pos
            )
        tal = block[pos:end]
        fields = tal.split(bytes([TAL_DELIM]))
        if len(fields) < 2:
            raise EdfParseError(
                f"annotation without text separator in record {record_index}", offset=pos
            )
        head = fields[0]
        if not head or head[0] not in (ord("+"), ord("-")):
            raise EdfParseError(
                f"annotation onset missing sign in record {record_index}", offset=pos
            )
        dur_split = head.split(bytes([TAL_DURATION]))
        try:
            onset = float(dur_split[0].decode("ascii"))
            duration = float(dur_split[1].decode("ascii")) if len(dur_split) > 1 else 0.0
        except (ValueError, UnicodeDecodeError):
            raise EdfParseError(
                f"cannot parse annotation timing {head!r} in record {record_index}",
                offset=pos,
            ) from None
        for text in fields[1:]:
            if not text:
                continue
            try:
                label = text.decode("utf-8")
            except UnicodeDecodeError:
                raise EdfParseError(
                    f"undecodable annotation text in record {record_index}", offset=pos
                ) from None
            entries.append((onset, duration, label))
        pos = end + 1
    return entries


def decode_events(annotations: list[tuple[float, float, str]]) -> list[MovementEvent]:
    """Map labeled annotations to movement events.

    Rest rows (T0) are dropped; T1/T2 become Left/Right. Unknown labels and
    overlapping cues are dataset-contract violations and raise.
    """
    events = []
    for onset, duration, label in annotations:
        if label == REST_LABEL:
            continue
        side = CUE_LABELS.get(label)
        if side is None:
            raise EventDecodeError(
                f"unknown annotation label {label!r} (expected T0/T1/T2)"
            )
        events.append(MovementEvent(onset_s=onset, duration_s=duration, side=side))
    events.sort(key=lambda e: e.onset_s)
    for prev, cur in zip(events, events[1:]):
        if cur.onset_s < prev.onset_s + prev.duration_s:
            raise EventDecodeError(
                f"movement events overlap: onset {cur.onset_s} s begins before the "
                f"{prev.side.value} cue at {prev.onset_s} s ends"
            )
    return events


def parse_record(data: bytes, record_id: str = "") -> RawRecord:
    """Parse a complete EDF+ byte string into a RawRecord."""
    header = parse_header(data)
    signals = header.signals
    ann_indices = [i for i, s in enumerate(signals) if s.is_annotation]
    if not ann_indices:
        raise EdfIntegrityError(
            "no annotation signal present; movement events are required"
        )
    eeg_indices = [i for i in range(len(signals)) if i not in ann_indices]
    if not eeg_indices:
        raise EdfIntegrityError("no EEG signals present")
    if header.record_duration_s <= 0:
        raise EdfIntegrityError(
            f"record duration must be positive, got {header.record_duration_s}"
        )
    for i in eeg_indices:
        s = signals[i]
        if s.physical_max == s.physical_min:
            raise EdfIntegrityError(
                f"signal {i} ({s.label.strip()!r}): degenerate physical range"
            )

    rates = {signals[i].samples_per_record / header.record_duration_s for i in eeg_indices}
    if len(rates) != 1:
        raise EdfIntegrityError(f"EEG signals disagree on sampling rate: {sorted(rates)}")
    fs = rates.pop()
    if fs <= 0:
        raise EdfIntegrityError(f"sampling rate must be positive, got {fs}")

    labels = [normalize_label(signals[i].label) for i in eeg_indices]
    if len(set(labels)) != len(labels):
        raise EdfIntegrityError("duplicate EEG channel labels after normalization")

    spr = [s.samples_per_record for s in signals]
    record_words = sum(spr)
    record_size = 2 * record_words
    payload = data[header.header_bytes :]
    n_records = header.n_data_records
    if n_records < 0:
        # EDF allows -1 for "unknown"; infer from the payload length.
        if record_size == 0 or len(payload) % record_size:
            raise EdfIntegrityError(
                "record count unknown and payload size is not a whole number of records"
            )
        n_records = len(payload) // record_size
    expected = n_records * record_size
    if len(payload) != expected:
        raise EdfIntegrityError(
            f"payload is {len(payload)} bytes but header declares "
            f"{n_records} records x {record_size} bytes = {expected}"
        )

    if n_records == 0:
        eeg = np.zeros((len(eeg_indices), 0))
        log: list[tuple[float, float, str]] = []
    else:
        words = np.frombuffer(payload, dtype="<i2").reshape(n_records, record_words)
        offsets = np.concatenate(([0], np.cumsum(spr)))
        rows = []
        for i in eeg_indices:
            s = signals[i]
            # int64 before arithmetic: int16 would wrap on -digital_min
            digital = words[:, offsets[i] : offsets[i + 1]].reshape(-1).astype(np.int64)
            gain = s.gain()
            rows.append((digital - s.digital_min) * gain + s.physical_min)
        eeg = np.vstack(rows) if rows else np.zeros((0, 0))
        log = []
        for i in ann_indices:
            start = 2 * offsets[i]
            stop = 2 * offsets[i + 1]
            for r in range(n_records):
                base = header.header_bytes + r * record_size
                log.extend(_parse_tal_block(data[base + start : base + stop], r))
        log.sort(key=lambda entry: entry[0])

    events = decode_events(log)
    for ev in events:
        if ev.onset_s + ev.duration_s > n_records * header.record_duration_s + 1e-9:
            raise EdfIntegrityError(
                f"event at {ev.onset_s} s extends past the end of the recording"
            )

    return RawRecord(
        header=header,
        labels=labels,
        data=eeg,
        fs=fs,
        events=events,
        annotation_log=log,
        record_id=record_id,
    )


def read_record(path: Path | str) -> RawRecord:
    path = Path(path)
    return parse_record(path.read_bytes(), record_id=path.stem)


# ---------------------------------------------------------------------------
# writing (synthetic records, fixtures, cache round trips)


def _tal_number(value: float) -> str:
    text = f"{value:.7g}"
    return text


def write_edf(
    labels: list[str],
    data: np.ndarray,
    fs: float,
    annotations: list[tuple[float, float, str]],
    *,
    patient_id: str = "X X X X",
    recording_id: str = "Startdate 12-AUG-2009 X X BCI2000",
    start: datetime = DEFAULT_START,
    record_duration_s: float = 1.0,
) -> bytes:
    """Encode channels x samples microvolt data plus annotations as EDF+ bytes.

    The sample count must be a whole number of data records. Physical ranges
    are chosen per channel to cover the data; values are quantized to the
    16-bit grid.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] != len(labels):
        raise EdfIntegrityError("data must be channels x samples matching labels")
    spr = fs * record_duration_s
    if abs(spr - round(spr)) > 1e-9:
        raise EdfIntegrityError(
            f"fs {fs} x record duration {record_duration_s} is not a whole sample count"
        )
    spr = int(round(spr))
    if spr <= 0:
        raise EdfIntegrityError("need at least one sample per data record")
    n_samples = data.shape[1]
    if n_samples % spr:
        raise EdfIntegrityError(
            f"{n_samples} samples is not a whole number of {spr}-sample records"
        )
    n_records = n_samples // spr

    dig_min, dig_max = -32768, 32767
    sig_headers = []
    digital_rows = []
    for ch, label in enumerate(labels):
        peak = float(np.max(np.abs(data[ch]))) if n_samples else 0.0
        bound = max(1.0, math.ceil(peak * 1.05))
        pmin, pmax = -bound, bound
        gain = (pmax - pmin) / (dig_max - dig_min)
        digital = np.round((data[ch] - pmin) / gain).astype(np.int64) + dig_min
        digital_rows.append(np.clip(digital, dig_min, dig_max).astype("<i2"))
        sig_headers.append(
            SignalHeader(
                label=label,
                transducer="",
                dimension="uV",
                physical_min=pmin,
                physical_max=pmax,
                digital_min=dig_min,
                digital_max=dig_max,
                prefiltering="",
                samples_per_record=spr,
            )
        )

    # Bucket annotations into their containing record; every record opens
    # with a timestamp TAL per the EDF+ TAL rules.
    tal_blocks = []
    for r in range(n_records):
        t0 = r * record_duration_s
        chunk = f"+{_tal_number(t0)}\x14\x14\x00".encode("ascii")
        for onset, duration, label in annotations:
            if t0 <= onset < t0 + record_duration_s:
                chunk += (
                    f"+{_tal_number(onset)}\x15{_tal_number(duration)}"
                    f"\x14{label}\x14\x00"
                ).encode("utf-8")
        tal_blocks.append(chunk)
    ann_bytes = max((len(b) for b in tal_blocks), default=2)
    ann_spr = (ann_bytes + 1) // 2 + 1
    sig_headers.append(
        SignalHeader(
            label=ANNOTATION_LABEL,
            transducer="",
            dimension="",
            physical_min=-1.0,
            physical_max=1.0,
            digital_min=dig_min,
            digital_max=dig_max,
            prefiltering="",
            samples_per_record=ann_spr,
        )
    )

    header = RecordHeader(
        version_tag="0",
        patient_id=patient_id,
        recording_id=recording_id,
        start_datetime=start,
        n_data_records=n_records,
        record_duration_s=record_duration_s,
        signals=sig_headers,
        reserved="EDF+C",
    )
    out = bytearray(serialize_header(header))
    for r in range(n_records):
        for row in digital_rows:
            out += row[r * spr : (r + 1) * spr].tobytes()
        out += tal_blocks[r].ljust(2 * ann_spr, b"\x00")
    return bytes(out)


def make_record(
    labels: list[str],
    data: np.ndarray,
    fs: float,
    annotations: list[tuple[float, float, str]],
    record_id: str = "",
) -> RawRecord:
    """Build a RawRecord directly (no byte container), e.g. from a simulator."""
    data = np.asarray(data, dtype=np.float64)
    spr = int(round(fs))
    signals = [
        SignalHeader(
            label=lab,
            transducer="",
            dimension="uV",
            physical_min=-1000.0,
            physical_max=1000.0,
            digital_min=-32768,
            digital_max=32767,
            prefiltering="",
            samples_per_record=spr,
        )
        for lab in labels
    ]
    signals.append(
        SignalHeader(
            label=ANNOTATION_LABEL,
            transducer="",
            dimension="",
            physical_min=-1.0,
            physical_max=1.0,
            digital_min=-32768,
            digital_max=32767,
            prefiltering="",
            samples_per_record=1,
        )
    )
    header = RecordHeader(
        version_tag="0",
        patient_id="X X X X",
        recording_id="synthetic",
        start_datetime=DEFAULT_START,
        n_data_records=int(np.ceil(data.shape[1] / spr)) if spr else 0,
        record_duration_s=1.0,
        signals=signals,
        reserved="EDF+C",
    )
    log = sorted(annotations, key=lambda entry: entry[0])
    return RawRecord(
        header=header,
        labels=[normalize_label(lab) for lab in labels],
        data=data,
        fs=float(fs),
        events=decode_events(log),
        annotation_log=list(log),
        record_id=record_id,
    )
