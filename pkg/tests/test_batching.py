import numpy as np
import pytest

from videokd import make_batches


def batch_sizes(batches):
    return [len(b) for b in batches]


def clip_order(manifest, split, batch_size, config, seed=0):
    order = []
    for batch in make_batches(manifest, split, batch_size, config, seed=seed):
        order.extend(batch.clip_ids)
    return order


class TestMakeBatches:
    def test_val_partition_sizes_and_order(self, fixture_manifest, sampling_config):
        batches = list(make_batches(fixture_manifest, "val", 3, sampling_config))
        assert batch_sizes(batches) == [3, 1]
        expected = [r.clip_id for r in fixture_manifest.split_records("val")]
        assert [cid for b in batches for cid in b.clip_ids] == expected

    def test_epoch_covers_split_exactly_once(self, fixture_manifest, sampling_config):
        seen = clip_order(fixture_manifest, "train", 3, sampling_config, seed=4)
        expected = sorted(r.clip_id for r in fixture_manifest.split_records("train"))
        assert sorted(seen) == expected

    def test_same_seed_same_order(self, fixture_manifest, sampling_config):
        a = clip_order(fixture_manifest, "train", 2, sampling_config, seed=9)
        b = clip_order(fixture_manifest, "train", 2, sampling_config, seed=9)
        assert a == b

    def test_some_seed_changes_order(self, fixture_manifest, sampling_config):
        base = clip_order(fixture_manifest, "train", 2, sampling_config, seed=1)
        assert any(
            clip_order(fixture_manifest, "train", 2, sampling_config, seed=s) != base for s in range(2, 102)
        )

    def test_labels_align_with_clips(self, fixture_manifest, sampling_config):
        label_of = {r.clip_id: r.label_index for r in fixture_manifest.records}
        for batch in make_batches(fixture_manifest, "train", 3, sampling_config, seed=2):
            assert [label_of[cid] for cid in batch.clip_ids] == list(batch.labels)
            assert batch.labels.dtype == np.int64

    def test_empty_split_errors(self, fixture_manifest, sampling_config):
        from dataclasses import replace

        trainless = replace(
            fixture_manifest,
            records=tuple(r for r in fixture_manifest.records if r.split == "val"),
        )
        with pytest.raises(ValueError, match="train"):
            next(make_batches(trainless, "train", 2, sampling_config))

    def test_cache_reuses_decoded_sequences(self, fixture_manifest, sampling_config):
        cache = {}
        list(make_batches(fixture_manifest, "val", 2, sampling_config, cache=cache))
        assert len(cache) == len(fixture_manifest.split_records("val"))
        again = list(make_batches(fixture_manifest, "val", 2, sampling_config, cache=cache))
        for batch in again:
            for seq in batch.sequences:
                assert seq is cache[seq.clip_id]


class TestBatchViews:
    def test_stacked_and_flat_agree(self, fixture_manifest, sampling_config):
        batch = next(make_batches(fixture_manifest, "val", 4, sampling_config))
        stacked = batch.stacked_frames()
        flat = batch.flat_frames()
        assert stacked.shape == (4, 8, 32, 32, 3)
        assert flat.shape == (32, 32, 32, 3)
        np.testing.assert_array_equal(stacked.reshape(-1, 32, 32, 3), flat)

    def test_frame_labels_repeat_per_frame(self, fixture_manifest, sampling_config):
        batch = next(make_batches(fixture_manifest, "val", 4, sampling_config))
        labels = batch.frame_labels()
        assert labels.shape == (sum(batch.frame_counts),)
        assert (labels[:8] == batch.labels[0]).all()
