import struct

import numpy as np
import pytest

from dialectvc.features import (
    FeatureConfig,
    FeatureError,
    FeatureFormatError,
    FeatureSequence,
    Waveform,
    WavBitDepthError,
    WavChannelsError,
    WavError,
    WavSampleRateError,
    WavTruncatedError,
    load_features,
    logmel,
    mel_filterbank,
    read_wav,
    save_features,
    write_wav,
)

SR = 16000


def write_pcm_wav(path, samples_i16, rate=SR, channels=1, bits=16, truncate_data_by=0):
    data = np.asarray(samples_i16, dtype="<i2").tobytes()
    declared = len(data)
    if truncate_data_by:
        data = data[:-truncate_data_by]
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + declared,
        b"WAVE",
        b"fmt ",
        16,
        1,
        channels,
        rate,
        rate * channels * bits // 8,
        channels * bits // 8,
        bits,
        b"data",
        declared,
    )
    path.write_bytes(header + data)


class TestReadWav:
    def test_one_second_of_silence(self, tmp_path):
        path = tmp_path / "sil.wav"
        write_pcm_wav(path, np.zeros(SR, dtype=np.int16))
        wave = read_wav(path)
        assert len(wave) == SR
        assert np.all(wave.samples == 0.0)

    def test_full_scale_negative_maps_to_minus_one(self, tmp_path):
        path = tmp_path / "fs.wav"
        write_pcm_wav(path, [-32768, 32767, 0])
        wave = read_wav(path)
        assert wave.samples[0] == -1.0
        assert wave.samples[1] == 32767 / 32768
        assert wave.samples[2] == 0.0

    def test_wrong_sample_rate(self, tmp_path):
        path = tmp_path / "8k.wav"
        write_pcm_wav(path, np.zeros(100, dtype=np.int16), rate=8000)
        with pytest.raises(WavSampleRateError, match="8000"):
            read_wav(path)

    def test_wrong_channels(self, tmp_path):
        path = tmp_path / "st.wav"
        write_pcm_wav(path, np.zeros(100, dtype=np.int16), channels=2)
        with pytest.raises(WavChannelsError, match="2 channels"):
            read_wav(path)

    def test_wrong_bit_depth(self, tmp_path):
        path = tmp_path / "8b.wav"
        write_pcm_wav(path, np.zeros(100, dtype=np.int16), bits=8)
        with pytest.raises(WavBitDepthError, match="8"):
            read_wav(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "trunc.wav"
        write_pcm_wav(path, np.zeros(100, dtype=np.int16), truncate_data_by=10)
        with pytest.raises(WavTruncatedError):
            read_wav(path)

    def test_not_a_wav(self, tmp_path):
        path = tmp_path / "x.wav"
        path.write_bytes(b"nonsense")
        with pytest.raises(WavError):
            read_wav(path)

    def test_write_read_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        wave = Waveform(rng.uniform(-0.9, 0.9, size=2048))
        path = tmp_path / "rt.wav"
        write_wav(wave, path)
        back = read_wav(path)
        assert len(back) == len(wave)
        assert np.max(np.abs(back.samples - wave.samples)) <= 1.0 / 32768


class TestLogmel:
    def test_frame_count_one_second_default(self):
        # 1 + floor((16000 - 400) / 160) = 98
        wave = Waveform(np.random.default_rng(1).uniform(-0.5, 0.5, SR))
        feat = logmel(wave)
        assert feat.frames.shape == (98, 80)
        assert feat.frame_rate == 100.0

    def test_frame_count_formula_property(self):
        cfg = FeatureConfig()
        rng = np.random.default_rng(2)
        for _ in range(25):
            n = int(rng.integers(cfg.window_samples, 4 * SR))
            wave = Waveform(rng.uniform(-0.1, 0.1, n))
            expected = 1 + (n - cfg.window_samples) // cfg.hop_samples
            assert logmel(wave, cfg).n_frames == expected

    def test_all_zero_waveform_hits_floor(self):
        cfg = FeatureConfig()
        feat = logmel(Waveform(np.zeros(SR)), cfg)
        assert np.all(feat.frames == np.log(cfg.floor))

    def test_too_short_input(self):
        with pytest.raises(FeatureError, match="shorter"):
            logmel(Waveform(np.zeros(399)))

    def test_sine_argmax_band_constant_and_matches_center_table(self):
        # Oracle: recompute the mel band centers from the mel-scale formulas
        # and check a tone at the center nearest 1 kHz lands in that band.
        cfg = FeatureConfig()

        def to_mel(f):
            return 2595.0 * np.log10(1.0 + f / 700.0)

        def to_hz(m):
            return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

        edges = to_hz(np.linspace(to_mel(0.0), to_mel(SR / 2), cfg.n_mels + 2))
        centers = edges[1:-1]
        band = int(np.argmin(np.abs(centers - 1000.0)))
        f0 = centers[band]
        t = np.arange(SR) / SR
        feat = logmel(Waveform(0.5 * np.sin(2 * np.pi * f0 * t)), cfg)
        argmax = np.argmax(feat.frames, axis=1)
        assert np.all(argmax == band)

    def test_pure_1khz_argmax_constant_across_frames(self):
        t = np.arange(SR) / SR
        feat = logmel(Waveform(0.5 * np.sin(2 * np.pi * 1000.0 * t)))
        argmax = np.argmax(feat.frames, axis=1)
        assert np.all(argmax == argmax[0])

    def test_scale_covariance_adds_two_log_g(self):
        # Gains below 1 keep g*base within full scale; all cells of a noise
        # signal sit far above the floor, so the shift applies everywhere.
        rng = np.random.default_rng(3)
        base = rng.uniform(-0.2, 0.2, SR)
        for g in (0.5, 0.25, 0.9):
            a = logmel(Waveform(base)).frames
            b = logmel(Waveform(g * base)).frames
            assert np.max(np.abs((b - a) - 2.0 * np.log(g))) < 1e-9

    def test_determinism(self):
        wave = Waveform(np.random.default_rng(4).uniform(-0.3, 0.3, SR))
        a = logmel(wave).frames
        b = logmel(wave).frames
        assert np.array_equal(a, b)

    def test_filterbank_shape_and_peaks(self):
        cfg = FeatureConfig()
        fb, centers = mel_filterbank(cfg)
        assert fb.shape == (80, cfg.n_fft // 2 + 1)
        assert centers.shape == (80,)
        assert np.all(fb >= 0.0) and np.all(fb <= 1.0)


class TestFeatureFile:
    def test_roundtrip_small_matrix(self, tmp_path):
        feat = FeatureSequence(np.array([[1.5, -2.25], [0.1, 3.0], [7.0, -0.5]]), 100.0, "logmel-test")
        path = tmp_path / "f.ft"
        save_features(feat, path)
        back = load_features(path)
        assert back.frames.shape == (3, 2)
        assert back.frame_rate == 100.0
        assert back.config_id == "logmel-test"
        assert np.array_equal(back.frames, feat.frames.astype(np.float32).astype(np.float64))

    def test_roundtrip_quantization_property(self, tmp_path):
        rng = np.random.default_rng(5)
        for i in range(10):
            frames = rng.normal(scale=10.0, size=(int(rng.integers(1, 50)), int(rng.integers(1, 30))))
            feat = FeatureSequence(frames, 100.0, f"cfg{i}")
            path = tmp_path / f"f{i}.ft"
            save_features(feat, path)
            diff = np.abs(load_features(path).frames - frames)
            bound = np.maximum(np.abs(frames) * 2.0**-23, 1e-37)
            assert np.all(diff <= bound)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ft"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(FeatureFormatError, match="bad magic"):
            load_features(path)

    def test_truncated_payload(self, tmp_path):
        feat = FeatureSequence(np.zeros((10, 10)), 100.0, "c")
        path = tmp_path / "t.ft"
        save_features(feat, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 200])  # keep only half the floats
        with pytest.raises(FeatureFormatError, match="truncated payload"):
            load_features(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        feat = FeatureSequence(np.zeros((2, 2)), 100.0, "c")
        path = tmp_path / "x.ft"
        save_features(feat, path)
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(FeatureFormatError, match="trailing"):
            load_features(path)

    def test_unrepresentable_frame_rate(self, tmp_path):
        feat = FeatureSequence(np.zeros((2, 2)), 99.5, "c")
        with pytest.raises(FeatureFormatError, match="frame rate"):
            save_features(feat, tmp_path / "r.ft")

    def test_config_id_roundtrips_exactly(self, tmp_path):
        feat = FeatureSequence(np.zeros((1, 1)), 50.0, "logmel+vc:voice_a")
        path = tmp_path / "cid.ft"
        save_features(feat, path)
        assert load_features(path).config_id == "logmel+vc:voice_a"
