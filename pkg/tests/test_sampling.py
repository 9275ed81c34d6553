import math

import numpy as np
import pytest

from videokd import (
    ClipRecord,
    FrameReadError,
    FrameSequence,
    SamplingConfig,
    preprocess_clip,
    sample_uniform,
    uniform_frame_indices,
)
from videokd.sampling import preprocess_from_manifest


def record_for(frame_count, clip_id="clip", path="clip"):
    return ClipRecord(clip_id=clip_id, path=path, label_index=0, split="train", frame_count=frame_count)


class TestUniformIndices:
    def test_identity_when_requesting_all_frames(self):
        assert uniform_frame_indices(26, 26) == list(range(26))

    def test_single_frame_is_the_middle(self):
        assert uniform_frame_indices(25, 1) == [12]

    def test_five_of_twentyfive(self):
        assert uniform_frame_indices(25, 5) == [2, 7, 12, 17, 22]

    def test_matches_float_formula_exhaustively(self):
        # independent route: direct floating evaluation of floor((i+0.5)*n/k)
        for n in range(1, 31):
            for k in range(1, n + 1):
                expected = [math.floor((i + 0.5) * n / k) for i in range(k)]
                assert uniform_frame_indices(n, k) == expected

    def test_properties_hold_for_oversampling_too(self):
        for n in range(1, 31):
            for k in range(1, 40):
                indices = uniform_frame_indices(n, k)
                assert len(indices) == min(k, n)
                assert all(0 <= i < n for i in indices)
                assert all(b > a for a, b in zip(indices, indices[1:]))

    def test_identity_for_all_n(self):
        for n in range(1, 31):
            assert uniform_frame_indices(n, n) == list(range(n))

    def test_sample_uniform_uses_record_and_config(self):
        config = SamplingConfig(num_frames=5, crop_size=32)
        assert sample_uniform(record_for(25), config) == [2, 7, 12, 17, 22]


class TestSamplingConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SamplingConfig(num_frames=0)
        with pytest.raises(ValueError):
            SamplingConfig(crop_size=4)
        with pytest.raises(ValueError):
            SamplingConfig(crop_strategy="random")
        with pytest.raises(ValueError):
            SamplingConfig(normalize_mean=(0.5, 0.5, 0.5))


class TestPreprocessClip:
    def test_shapes_and_range(self, fixture_manifest):
        record = fixture_manifest.records[0]
        config = SamplingConfig(num_frames=8, crop_size=24)
        seq = preprocess_from_manifest(fixture_manifest, record, config)
        assert seq.frames.shape == (8, 24, 24, 3)
        assert seq.frames.dtype == np.float32
        assert seq.frames.min() >= 0.0 and seq.frames.max() <= 1.0
        assert list(seq.source_indices) == sample_uniform(record, config)

    def test_center_crop_is_deterministic(self, fixture_manifest, sampling_config):
        record = fixture_manifest.records[0]
        a = preprocess_from_manifest(fixture_manifest, record, sampling_config)
        b = preprocess_from_manifest(fixture_manifest, record, sampling_config)
        assert (a.frames == b.frames).all()
        assert a.source_indices == b.source_indices

    def test_constant_frame_survives_cropping(self, tmp_path):
        from PIL import Image

        clip_dir = tmp_path / "flat"
        clip_dir.mkdir()
        pixels = np.full((48, 64, 3), 128, dtype=np.uint8)
        Image.fromarray(pixels).save(clip_dir / "frame_0000.png")
        record = record_for(1, clip_id="flat", path="flat")
        seq = preprocess_clip(record, SamplingConfig(num_frames=1, crop_size=16), root=tmp_path)
        np.testing.assert_allclose(seq.frames, 128 / 255.0, atol=1e-6)

    def test_short_clip_returns_all_frames(self, tmp_path):
        from PIL import Image

        clip_dir = tmp_path / "short"
        clip_dir.mkdir()
        for t in range(3):
            Image.fromarray(np.full((16, 16, 3), 40 * t, dtype=np.uint8)).save(clip_dir / f"frame_{t:04d}.png")
        record = record_for(3, clip_id="short", path="short")
        seq = preprocess_clip(record, SamplingConfig(num_frames=8, crop_size=16), root=tmp_path)
        assert seq.num_frames == 3

    def test_missing_frame_reports_clip_and_index(self, tmp_path):
        clip_dir = tmp_path / "broken"
        clip_dir.mkdir()
        record = record_for(5, clip_id="broken", path="broken")
        with pytest.raises(FrameReadError, match="broken") as excinfo:
            preprocess_clip(record, SamplingConfig(num_frames=2, crop_size=16), root=tmp_path)
        assert excinfo.value.clip_id == "broken"

    def test_corrupt_image_reports_clip(self, tmp_path):
        clip_dir = tmp_path / "junk"
        clip_dir.mkdir()
        (clip_dir / "frame_0000.png").write_bytes(b"not an image")
        record = record_for(1, clip_id="junk", path="junk")
        with pytest.raises(FrameReadError, match="junk"):
            preprocess_clip(record, SamplingConfig(num_frames=1, crop_size=16), root=tmp_path)

    def test_random_scale_center_is_seeded(self, fixture_manifest):
        record = fixture_manifest.records[0]
        config = SamplingConfig(num_frames=4, crop_size=24, crop_strategy="random-scale-center", seed=5)
        a = preprocess_from_manifest(fixture_manifest, record, config)
        b = preprocess_from_manifest(fixture_manifest, record, config)
        assert (a.frames == b.frames).all()

    def test_rng_varies_random_scale_crops(self, fixture_manifest):
        record = fixture_manifest.records[0]
        config = SamplingConfig(num_frames=4, crop_size=16, crop_strategy="random-scale-center", seed=5)
        a = preprocess_from_manifest(fixture_manifest, record, config, rng=np.random.default_rng(1))
        b = preprocess_from_manifest(fixture_manifest, record, config, rng=np.random.default_rng(2))
        assert not (a.frames == b.frames).all()


class TestVideoFileClips:
    def test_video_clip_decodes(self, tmp_path):
        import cv2

        path = tmp_path / "clip.avi"
        writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), 10, (32, 32))
        if not writer.isOpened():
            pytest.skip("MJPG writer unavailable")
        for t in range(10):
            writer.write(np.full((32, 32, 3), 20 * t, dtype=np.uint8))
        writer.release()

        record = record_for(10, clip_id="vid", path="clip.avi")
        seq = preprocess_clip(record, SamplingConfig(num_frames=4, crop_size=16), root=tmp_path)
        assert seq.frames.shape == (4, 16, 16, 3)
        # later frames are brighter: temporal order survived decoding
        means = seq.frames.mean(axis=(1, 2, 3))
        assert (np.diff(means) > 0).all()

    def test_video_too_short_reports_missing_frame(self, tmp_path):
        import cv2

        path = tmp_path / "short.avi"
        writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), 10, (32, 32))
        if not writer.isOpened():
            pytest.skip("MJPG writer unavailable")
        for t in range(3):
            writer.write(np.zeros((32, 32, 3), dtype=np.uint8))
        writer.release()

        record = record_for(10, clip_id="short", path="short.avi")
        with pytest.raises(FrameReadError, match="short"):
            preprocess_clip(record, SamplingConfig(num_frames=10, crop_size=16), root=tmp_path)


class TestFrameSequence:
    def test_rejects_non_increasing_indices(self):
        frames = np.zeros((2, 8, 8, 3), dtype=np.float32)
        with pytest.raises(ValueError, match="strictly increasing"):
            FrameSequence(clip_id="x", frames=frames, source_indices=(1, 1))
