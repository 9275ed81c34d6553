import json

import pytest

from videokd import (
    ClassVocabulary,
    ClipManifest,
    ClipRecord,
    ManifestError,
    load_manifest,
    save_manifest,
    stratified_split,
)


def write_manifest_file(path, class_names, rows):
    lines = [json.dumps({"version": "1", "class_names": class_names})]
    lines += [json.dumps(row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def row(clip_id, label, split="train", frame_count=25):
    return {"clip_id": clip_id, "path": clip_id, "label": label, "split": split, "frame_count": frame_count}


class TestLoadManifest:
    def test_minimal_two_records(self, tmp_path):
        path = write_manifest_file(
            tmp_path / "m.jsonl", ["Kick", "Run"], [row("a", "Kick"), row("b", "Run", split="val")]
        )
        manifest = load_manifest(path)
        assert manifest.num_classes == 2
        assert len(manifest.records) == 2
        assert manifest.records[0].label_index == 0
        assert manifest.records[1].label_index == 1

    def test_duplicate_clip_id_names_the_duplicate(self, tmp_path):
        path = write_manifest_file(tmp_path / "m.jsonl", ["Kick", "Run"], [row("dup", "Kick"), row("dup", "Run")])
        with pytest.raises(ManifestError, match="dup"):
            load_manifest(path)

    def test_448_records_over_4_classes(self, tmp_path):
        names = ["Dribble", "Kick", "Run", "Walk"]
        rows = [
            row(f"clip{i:04d}", names[i % 4], split="train" if i % 5 else "val", frame_count=25 + i % 2)
            for i in range(448)
        ]
        manifest = load_manifest(write_manifest_file(tmp_path / "m.jsonl", names, rows))
        assert manifest.num_classes == 4
        assert len(manifest.records) == 448

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "nope.jsonl")

    def test_unknown_label_reports_line_and_name(self, tmp_path):
        path = write_manifest_file(tmp_path / "m.jsonl", ["Kick"], [row("a", "Kick"), row("b", "Sprint")])
        with pytest.raises(ManifestError, match=r"line 3.*'Sprint'"):
            load_manifest(path)

    def test_schema_violation_reports_field(self, tmp_path):
        path = tmp_path / "m.jsonl"
        lines = [
            json.dumps({"version": "1", "class_names": ["Kick"]}),
            json.dumps({"clip_id": "a", "path": "a", "label": "Kick", "split": "train"}),
        ]
        path.write_text("\n".join(lines))
        with pytest.raises(ManifestError, match=r"line 2.*frame_count"):
            load_manifest(path)

    def test_bad_split_value(self, tmp_path):
        path = write_manifest_file(tmp_path / "m.jsonl", ["Kick"], [row("a", "Kick", split="test")])
        with pytest.raises(ManifestError, match="split"):
            load_manifest(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(json.dumps({"version": "99", "class_names": ["Kick"]}) + "\n" + json.dumps(row("a", "Kick")))
        with pytest.raises(ManifestError, match="version"):
            load_manifest(path)


class TestRoundTrip:
    def test_save_load_equals(self, tmp_path):
        manifest = ClipManifest(
            vocabulary=ClassVocabulary(("Dribble", "Kick")),
            records=(
                ClipRecord("a", "clips/a", 0, "train", 25),
                ClipRecord("b", "clips/b", 1, "val", 26),
            ),
        )
        path = save_manifest(manifest, tmp_path / "m.jsonl")
        loaded = load_manifest(path)
        assert loaded.vocabulary == manifest.vocabulary
        assert loaded.records == manifest.records
        assert loaded.version == manifest.version

    def test_write_is_deterministic(self, tmp_path, fixture_manifest):
        a = save_manifest(fixture_manifest, tmp_path / "a.jsonl").read_bytes()
        b = save_manifest(fixture_manifest, tmp_path / "b.jsonl").read_bytes()
        assert a == b


class TestVocabulary:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ManifestError, match="duplicate"):
            ClassVocabulary(("Kick", "Kick"))

    def test_empty_name_rejected(self):
        with pytest.raises(ManifestError):
            ClassVocabulary(("Kick", ""))

    def test_index_lookup(self):
        vocab = ClassVocabulary(("Dribble", "Kick", "Run", "Walk"))
        assert vocab.index_of("Run") == 2
        with pytest.raises(ManifestError, match="Sprint"):
            vocab.index_of("Sprint")


class TestStratifiedSplit:
    def test_80_20_on_10_clips(self):
        vocab = ClassVocabulary(("A", "B"))
        records = tuple(ClipRecord(f"c{i}", f"c{i}", i % 2, "train", 25) for i in range(10))
        manifest = ClipManifest(vocabulary=vocab, records=records)
        split = stratified_split(manifest, train_fraction=0.8, seed=3)
        assert len(split.split_records("train")) == 8
        assert len(split.split_records("val")) == 2
        # stratified: one val clip per class
        val_labels = sorted(r.label_index for r in split.split_records("val"))
        assert val_labels == [0, 1]

    def test_seeded_and_deterministic(self):
        vocab = ClassVocabulary(("A", "B"))
        records = tuple(ClipRecord(f"c{i}", f"c{i}", i % 2, "train", 25) for i in range(12))
        manifest = ClipManifest(vocabulary=vocab, records=records)
        one = stratified_split(manifest, 0.75, seed=9)
        two = stratified_split(manifest, 0.75, seed=9)
        assert one.records == two.records

    def test_every_class_keeps_a_val_record(self):
        vocab = ClassVocabulary(("A", "B", "C"))
        records = tuple(ClipRecord(f"c{i}", f"c{i}", i % 3, "train", 25) for i in range(6))
        manifest = ClipManifest(vocabulary=vocab, records=records)
        split = stratified_split(manifest, train_fraction=0.95, seed=0)
        for label in range(3):
            assert any(r.label_index == label for r in split.split_records("val"))
