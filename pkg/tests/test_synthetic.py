import numpy as np

from videokd import SamplingConfig, load_manifest, make_synthetic_fixture
from videokd.sampling import preprocess_from_manifest


class TestSyntheticFixture:
    def test_counts_follow_arguments(self, tmp_path):
        manifest = make_synthetic_fixture(4, 2, 25, 32, seed=7, out_dir=tmp_path / "f")
        assert manifest.num_classes == 4
        assert len(manifest.records) == 8
        assert all(r.frame_count == 25 for r in manifest.records)
        assert len(manifest.split_records("train")) == 4
        assert len(manifest.split_records("val")) == 4

    def test_seventy_two_clip_scale(self, tmp_path):
        manifest = make_synthetic_fixture(4, 18, 2, 8, seed=1, out_dir=tmp_path / "f")
        assert len(manifest.records) == 72
        per_class = [sum(r.label_index == c for r in manifest.records) for c in range(4)]
        assert per_class == [18, 18, 18, 18]

    def test_same_seed_identical_pixels(self, tmp_path):
        config = SamplingConfig(num_frames=4, crop_size=16)
        a = make_synthetic_fixture(2, 1, 4, 16, seed=3, out_dir=tmp_path / "a")
        b = make_synthetic_fixture(2, 1, 4, 16, seed=3, out_dir=tmp_path / "b")
        for ra, rb in zip(a.records, b.records):
            fa = preprocess_from_manifest(a, ra, config).frames
            fb = preprocess_from_manifest(b, rb, config).frames
            np.testing.assert_array_equal(fa, fb)

    def test_different_seeds_differ(self, tmp_path):
        config = SamplingConfig(num_frames=4, crop_size=16)
        a = make_synthetic_fixture(2, 1, 4, 16, seed=3, out_dir=tmp_path / "a")
        b = make_synthetic_fixture(2, 1, 4, 16, seed=4, out_dir=tmp_path / "b")
        fa = preprocess_from_manifest(a, a.records[0], config).frames
        fb = preprocess_from_manifest(b, b.records[0], config).frames
        assert not (fa == fb).all()

    def test_classes_are_separable_by_mean_color(self, tmp_path):
        manifest = make_synthetic_fixture(4, 2, 3, 16, seed=11, out_dir=tmp_path / "f")
        config = SamplingConfig(num_frames=3, crop_size=16)
        means = {}
        for record in manifest.records:
            frames = preprocess_from_manifest(manifest, record, config).frames
            means.setdefault(record.label_index, []).append(frames.mean(axis=(0, 1, 2)))
        centers = {label: np.mean(clips, axis=0) for label, clips in means.items()}
        # every clip lies closest to its own class color
        for label, clips in means.items():
            for clip_mean in clips:
                distances = {c: np.linalg.norm(clip_mean - center) for c, center in centers.items()}
                assert min(distances, key=distances.get) == label

    def test_manifest_file_reloads_equal(self, tmp_path):
        manifest = make_synthetic_fixture(3, 2, 4, 16, seed=5, out_dir=tmp_path / "f")
        loaded = load_manifest(tmp_path / "f" / "manifest.jsonl")
        assert loaded.vocabulary == manifest.vocabulary
        assert loaded.records == manifest.records
