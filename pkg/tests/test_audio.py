import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimodal.audio import (
    AudioClip,
    FunctionalCatalog,
    LldFrameSeries,
    apply_functionals,
    compute_llds,
    extract_audio_features,
    frame_clip,
    read_wav,
    write_wav,
    z_standardize,
)
from trimodal.errors import ConfigError, DataError


def sine(freq, seconds=1.0, rate=8000, amp=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


class TestFraming:
    def test_one_second_at_30hz_gives_28_windows(self):
        frames = frame_clip(sine(100), frame_rate=30.0, window=0.1)
        assert len(frames) == 28  # floor((1.0 - 0.1) * 30) + 1
        assert all(f.size == 800 for f in frames)

    def test_clip_exactly_one_window(self):
        clip = AudioClip(np.zeros(800), 8000)
        assert len(frame_clip(clip, 30.0, 0.1)) == 1

    def test_frame_rate_inverse_of_window_tiles_clip(self):
        clip = AudioClip(np.arange(2400) / 2400.0, 8000)
        frames = frame_clip(clip, frame_rate=10.0, window=0.1)
        assert len(frames) == 3
        rebuilt = np.concatenate(frames)
        assert np.array_equal(rebuilt, clip.samples)

    def test_short_clip_rejected(self):
        with pytest.raises(DataError, match="shorter"):
            frame_clip(AudioClip(np.zeros(100), 8000), 30.0, 0.1)


class TestLlds:
    def test_all_zero_window(self):
        series = compute_llds([np.zeros(800)], 8000)
        assert series.channels["intensity"][0] == 0.0
        assert series.channels["pitch"][0] == 0.0
        assert series.channels["zcr"][0] == 0.0
        assert not series.voiced_mask[0]

    def test_pure_100hz_sine_pitch(self):
        clip = sine(100.0)
        series = compute_llds(frame_clip(clip), clip.sample_rate)
        # one autocorrelation lag bin around lag 80: [8000/81, 8000/79]
        lo, hi = 8000 / 81, 8000 / 79
        for p in series.channels["pitch"]:
            assert lo <= p <= hi

    def test_constant_positive_signal(self):
        series = compute_llds([np.full(800, 0.5)], 8000)
        assert series.channels["zcr"][0] == 0.0
        assert series.channels["intensity"][0] == pytest.approx(0.5)
        assert series.voiced_mask[0]

    def test_zcr_counts_sign_changes(self):
        # one full 100 Hz period per 10 ms: 200 crossings/sec at 8 kHz
        clip = sine(100.0)
        series = compute_llds(frame_clip(clip), clip.sample_rate)
        assert series.channels["zcr"][0] == pytest.approx(200.0, rel=0.02)

    @given(st.floats(min_value=0.1, max_value=8.0), st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_amplitude_scaling(self, scale, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        base = rng.uniform(-0.1, 0.1, size=1600)
        a = compute_llds([base], 8000, voiced_threshold=0.0)
        b = compute_llds([base * scale], 8000, voiced_threshold=0.0)
        assert b.channels["intensity"][0] == pytest.approx(a.channels["intensity"][0] * scale)
        assert b.channels["zcr"][0] == a.channels["zcr"][0]
        assert b.channels["pitch"][0] == pytest.approx(a.channels["pitch"][0])

    def test_hop_shift_permutes_frames(self):
        # 8000 / 40 Hz = integer 200-sample hop, so shifted frames align
        rng = np.random.Generator(np.random.PCG64(3))
        samples = rng.uniform(-0.5, 0.5, size=4000)
        clip = AudioClip(samples, 8000)
        shifted = AudioClip(samples[200:], 8000)
        a = compute_llds(frame_clip(clip, 40.0, 0.1), 8000)
        b = compute_llds(frame_clip(shifted, 40.0, 0.1), 8000)
        for name in a.channels:
            assert np.allclose(a.channels[name][1 : 1 + b.n_frames], b.channels[name])


class TestStandardize:
    def series(self, values, voiced=None):
        values = np.asarray(values, dtype=float)
        mask = np.ones(values.size, bool) if voiced is None else np.asarray(voiced, bool)
        return LldFrameSeries(30.0, 0.1, {"pitch": values}, mask)

    def test_two_point_channel(self):
        out = z_standardize(self.series([1.0, 3.0]))
        assert out.channels["pitch"].tolist() == [-1.0, 1.0]

    def test_idempotent(self):
        once = z_standardize(self.series([1.0, 2.0, 4.0, 8.0]))
        twice = z_standardize(once)
        assert np.allclose(once.channels["pitch"], twice.channels["pitch"], atol=1e-12)

    def test_constant_channel_zeroed_with_warning(self):
        out = z_standardize(self.series([2.0, 2.0, 2.0]))
        assert np.array_equal(out.channels["pitch"], np.zeros(3))
        assert out.warnings == ["pitch"]

    def test_unvoiced_frames_untouched(self):
        out = z_standardize(self.series([9.0, 1.0, 3.0], voiced=[False, True, True]))
        assert out.channels["pitch"][0] == 9.0
        assert out.channels["pitch"][1:].tolist() == [-1.0, 1.0]

    def test_single_voiced_frame_rejected(self):
        with pytest.raises(DataError, match="voiced"):
            z_standardize(self.series([1.0, 2.0], voiced=[True, False]))

    def test_voiced_moments(self):
        rng = np.random.Generator(np.random.PCG64(9))
        out = z_standardize(self.series(rng.normal(5, 3, size=50)))
        v = out.channels["pitch"]
        assert abs(v.mean()) < 1e-9
        assert abs(v.std() - 1.0) < 1e-9


class TestFunctionals:
    def series(self, values):
        values = np.asarray(values, dtype=float)
        return LldFrameSeries(30.0, 0.1, {
            "pitch": values, "intensity": values, "zcr": values,
        }, np.ones(values.size, bool))

    def test_constant_series(self):
        vec = apply_functionals(self.series([2.0, 2.0]))
        by_name = dict(zip(vec.names, vec.values))
        assert by_name["pitch.mean"] == 2.0
        assert by_name["pitch.std"] == 0.0
        assert by_name["pitch.rms"] == 2.0

    def test_symmetric_pair(self):
        vec = apply_functionals(self.series([-1.0, 1.0]))
        by_name = dict(zip(vec.names, vec.values))
        assert by_name["pitch.mean"] == 0.0
        assert by_name["pitch.rms"] == 1.0
        assert by_name["pitch.amp_mean"] == 1.0
        assert by_name["pitch.range"] == 2.0

    def test_catalog_product_length(self):
        vec = apply_functionals(self.series([1.0, 2.0]))
        assert len(vec.values) == 21  # 3 descriptors x 7 functionals
        assert vec.names == FunctionalCatalog().names()

    def test_vector_layout_independent_of_content(self):
        a = apply_functionals(self.series([1.0, 2.0]))
        b = apply_functionals(self.series(np.arange(40.0)))
        assert a.names == b.names

    def test_unknown_functional_rejected(self):
        with pytest.raises(ConfigError):
            FunctionalCatalog(functionals=("mean", "kurtosis"))


class TestWav:
    def test_round_trip(self, tmp_path):
        clip = sine(220.0, seconds=0.25)
        path = tmp_path / "clip.wav"
        write_wav(path, clip)
        back = read_wav(path)
        assert back.sample_rate == clip.sample_rate
        assert back.samples.size == clip.samples.size
        assert np.max(np.abs(back.samples - clip.samples)) < 1.0 / 32000

    def test_extract_pipeline_shape(self, tmp_path):
        clip = sine(150.0)
        vec = extract_audio_features(clip)
        assert vec.shape == (FunctionalCatalog().size,)
