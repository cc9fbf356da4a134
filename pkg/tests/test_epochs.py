import numpy as np
import pytest

from motordecode import epochs as ep
from motordecode.dsp import MONTAGE_LABELS, MultiChannelSignal, select_channels
from motordecode.edf import MovementEvent, Side
from motordecode.errors import DataError

FS = 160.0


def montage_signal(n_seconds=60, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(8, int(n_seconds * FS)))
    return MultiChannelSignal(MONTAGE_LABELS, data, FS)


def events(*pairs):
    return [MovementEvent(onset, 4.1, side) for onset, side in pairs]


class TestWindows:
    def test_erd_window_is_320_samples(self):
        sig = montage_signal()
        out = ep.extract_epochs(sig, events((10.0, Side.LEFT)), ep.ERD)
        assert out[0].n_samples == 320
        assert out[0].data.shape == (8, 320)

    def test_ers_window_is_160_samples(self):
        sig = montage_signal()
        out = ep.extract_epochs(sig, events((10.0, Side.RIGHT)), ep.ERS)
        assert out[0].n_samples == 160

    def test_mrcp_window_matches_erd(self):
        assert ep.MRCP.window_s == (-2.0, 0.0)
        assert ep.MRCP.window_samples(FS) == (-320, 0)

    def test_window_invariant_matches_round(self):
        for analysis in (ep.ERD, ep.ERS, ep.MRCP):
            lo, hi = analysis.window_samples(FS)
            expected = ep.round_half_up(
                (analysis.window_s[1] - analysis.window_s[0]) * FS
            )
            assert hi - lo == expected

    def test_epoch_content_is_time_locked(self):
        sig = montage_signal()
        onset = 12.5
        out = ep.extract_epochs(sig, events((onset, Side.LEFT)), ep.ERS)
        start = ep.round_half_up(onset * FS) + ep.round_half_up(4.1 * FS)
        np.testing.assert_array_equal(
            out[0].data, sig.data[:, start: start + 160]
        )


class TestBoundaries:
    def test_early_event_skipped_and_counted(self):
        sig = montage_signal()
        report = ep.SkipReport()
        out = ep.extract_epochs(
            sig, events((1.0, Side.LEFT), (30.0, Side.RIGHT)), ep.ERD, report
        )
        assert len(out) == 1
        assert report.skipped == 1
        assert report.produced == 1
        assert report.skipped_onsets == [1.0]

    def test_late_event_skipped_for_ers(self):
        sig = montage_signal(n_seconds=20)
        report = ep.SkipReport()
        out = ep.extract_epochs(
            sig, events((16.0, Side.LEFT), (5.0, Side.RIGHT)), ep.ERS, report
        )
        assert len(out) == 1
        assert report.skipped == 1

    def test_counts_are_conserved(self):
        sig = montage_signal(n_seconds=30)
        evs = events(*((3.0 + 4.5 * i, Side.LEFT) for i in range(6)))
        report = ep.SkipReport()
        out = ep.extract_epochs(sig, evs, ep.ERS, report)
        assert report.produced + report.skipped == len(evs)
        assert len(out) == report.produced


class TestGrouping:
    def test_partition_preserves_order(self):
        sig = montage_signal()
        evs = events(
            (5.0, Side.LEFT), (13.0, Side.RIGHT), (21.0, Side.LEFT),
            (29.0, Side.RIGHT), (37.0, Side.LEFT),
        )
        out = ep.extract_epochs(sig, evs, ep.ERD)
        left, right = ep.group_by_side(out, "S001R03", sig.labels)
        assert [e.event.onset_s for e in left.epochs] == [5.0, 21.0, 37.0]
        assert [e.event.onset_s for e in right.epochs] == [13.0, 29.0]
        assert left.side is Side.LEFT and right.side is Side.RIGHT

    def test_single_side_is_error(self):
        sig = montage_signal()
        out = ep.extract_epochs(sig, events((5.0, Side.LEFT)), ep.ERD)
        with pytest.raises(DataError):
            ep.group_by_side(out, "S001R03", sig.labels)

    def test_six_datasets_per_run(self):
        sig = montage_signal()
        evs = events((5.0, Side.LEFT), (13.0, Side.RIGHT), (21.0, Side.LEFT))
        datasets = []
        for analysis in (ep.ERD, ep.ERS, ep.MRCP):
            out = ep.extract_epochs(sig, evs, analysis)
            datasets.extend(ep.group_by_side(out, "r", sig.labels))
        assert len(datasets) == 6
        assert {(d.analysis.name, d.side) for d in datasets} == {
            (a, s) for a in ("ERD", "ERS", "MRCP") for s in (Side.LEFT, Side.RIGHT)
        }


class TestRhythmIsolation:
    def two_tone_dataset(self, analysis, f_keep, f_kill):
        t = np.arange(4000) / FS
        tone = np.sin(2 * np.pi * f_keep * t) + np.sin(2 * np.pi * f_kill * t)
        data = np.tile(tone, (8, 1))
        sig = MultiChannelSignal(MONTAGE_LABELS, data, FS)
        evs = events((6.0, Side.LEFT), (12.0, Side.RIGHT))
        eps = ep.extract_epochs(sig, evs, analysis)
        left, right = ep.group_by_side(eps, "r", sig.labels)
        return left

    @staticmethod
    def band_power(x, freq):
        spectrum = np.abs(np.fft.rfft(x * np.hanning(x.size))) ** 2
        freqs = np.fft.rfftfreq(x.size, 1 / FS)
        band = (freqs > freq - 1.5) & (freqs < freq + 1.5)
        return spectrum[band].sum()

    def test_erd_keeps_mu_kills_gamma(self):
        ds = self.two_tone_dataset(ep.ERD, 10.0, 45.0)
        filtered = ep.isolate_rhythm(ds)
        x_in = ds.epochs[0].data[0]
        x_out = filtered.epochs[0].data[0]
        keep_ratio = self.band_power(x_out, 10.0) / self.band_power(x_in, 10.0)
        kill_ratio = self.band_power(x_out, 45.0) / self.band_power(x_in, 45.0)
        assert keep_ratio >= 10 ** (-1 / 10)  # within 1 dB
        assert kill_ratio <= 10 ** (-24 / 10)  # at least 24 dB down

    def test_mrcp_keeps_slow_kills_beta(self):
        ds = self.two_tone_dataset(ep.MRCP, 1.0, 20.0)
        filtered = ep.isolate_rhythm(ds)
        x_in = ds.epochs[0].data[0]
        x_out = filtered.epochs[0].data[0]
        kill_ratio = self.band_power(x_out, 20.0) / self.band_power(x_in, 20.0)
        assert kill_ratio <= 10 ** (-24 / 10)

    def test_zero_epoch_stays_zero(self):
        sig = MultiChannelSignal(MONTAGE_LABELS, np.zeros((8, 3200)), FS)
        evs = events((6.0, Side.LEFT), (10.0, Side.RIGHT))
        eps = ep.extract_epochs(sig, evs, ep.ERD)
        left, _ = ep.group_by_side(eps, "r", sig.labels)
        filtered = ep.isolate_rhythm(left)
        assert np.all(filtered.epochs[0].data == 0.0)

    def test_shape_preserved(self):
        ds = self.two_tone_dataset(ep.ERS, 10.0, 45.0)
        filtered = ep.isolate_rhythm(ds)
        assert filtered.epochs[0].data.shape == ds.epochs[0].data.shape
        assert len(filtered.epochs) == len(ds.epochs)


def test_epoching_commutes_with_channel_selection():
    rng = np.random.default_rng(9)
    labels = ("FP1",) + MONTAGE_LABELS + ("O1",)
    data = rng.normal(size=(10, 6400))
    sig = MultiChannelSignal(labels, data, FS)
    evs = events((10.0, Side.LEFT), (20.0, Side.RIGHT))

    select_then_epoch = ep.extract_epochs(
        select_channels(sig, MONTAGE_LABELS), evs, ep.ERD
    )
    epoch_then_select = ep.extract_epochs(sig, evs, ep.ERD)
    for a, b in zip(select_then_epoch, epoch_then_select):
        picked = select_channels(
            MultiChannelSignal(labels, b.data, FS), MONTAGE_LABELS
        )
        np.testing.assert_array_equal(a.data, picked.data)


def test_analysis_lookup():
    assert ep.get_analysis("erd") is ep.ERD
    assert ep.get_analysis(" MRCP ") is ep.MRCP
    with pytest.raises(DataError):
        ep.get_analysis("XYZ")
