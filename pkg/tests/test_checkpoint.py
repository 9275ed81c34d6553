import pytest
import torch

from videokd import (
    CheckpointError,
    DistillParams,
    StudentTrainConfig,
    TeacherTrainConfig,
    load_checkpoint,
    make_batches,
    save_checkpoint,
    train_teacher,
)

from conftest import tiny_student, tiny_teacher


def probe_logits(model, manifest, sampling):
    batch = next(make_batches(manifest, "val", 4, sampling))
    model.eval_mode()
    with torch.no_grad():
        return model.clip_logits(batch, sampling)


class TestRoundTrip:
    def test_student_probe_logits_identical(self, tmp_path, fixture_manifest, sampling_config):
        student = tiny_student(seed=1)
        before = probe_logits(student, fixture_manifest, sampling_config)
        path = save_checkpoint(student, tmp_path / "student.ckpt")
        loaded = load_checkpoint(path)
        after = probe_logits(loaded.model, fixture_manifest, sampling_config)
        assert torch.equal(before, after)

    def test_jointnet_probe_logits_identical(self, tmp_path, fixture_manifest, sampling_config):
        teacher = tiny_teacher(seed=2)
        before = probe_logits(teacher, fixture_manifest, sampling_config)
        loaded = load_checkpoint(save_checkpoint(teacher, tmp_path / "teacher.ckpt"))
        assert torch.equal(before, probe_logits(loaded.model, fixture_manifest, sampling_config))
        assert loaded.model.num_classes == teacher.num_classes
        # frozen-mask structure survives the round trip
        assert loaded.model.trainable_mask == teacher.trainable_mask

    def test_trained_state_round_trips(self, tmp_path, fixture_manifest, sampling_config):
        teacher = tiny_teacher(seed=3)
        config = TeacherTrainConfig(epochs=4, batch_size=4, learning_rate=1e-2, seed=0)
        result = train_teacher(teacher, fixture_manifest, sampling_config, config, out_dir=tmp_path)
        loaded = load_checkpoint(result.last_checkpoint)
        assert loaded.epoch == 4
        assert loaded.seed == 0
        assert loaded.history == result.history
        assert loaded.config["train"]["learning_rate"] == pytest.approx(1e-2)
        assert loaded.optimizer_state is not None
        assert torch.equal(
            probe_logits(teacher, fixture_manifest, sampling_config),
            probe_logits(loaded.model, fixture_manifest, sampling_config),
        )


class TestIntegrity:
    def test_truncated_file_is_detected(self, tmp_path):
        student = tiny_student(seed=4)
        path = save_checkpoint(student, tmp_path / "student.ckpt")
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError, match="corrupt|truncated"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "missing.ckpt")

    def test_version_mismatch(self, tmp_path):
        import zipfile

        student = tiny_student(seed=5)
        path = save_checkpoint(student, tmp_path / "student.ckpt")
        # rewrite the version entry
        bumped = tmp_path / "bumped.ckpt"
        with zipfile.ZipFile(path) as src, zipfile.ZipFile(bumped, "w") as dst:
            for name in src.namelist():
                data = src.read(name)
                if name == "format.json":
                    data = b'{"format_version": "999"}'
                dst.writestr(name, data)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(bumped)

    def test_shape_mismatch_against_specs(self, tmp_path):
        import io
        import json
        import zipfile

        import numpy as np

        student = tiny_student(seed=6)
        path = save_checkpoint(student, tmp_path / "student.ckpt")
        tampered = tmp_path / "tampered.ckpt"
        with zipfile.ZipFile(path) as src:
            names = src.namelist()
            arrays = dict(np.load(io.BytesIO(src.read("state.npz"))))
            manifest = json.loads(src.read("state_manifest.json"))
            key = "fc.weight"
            arrays[key] = np.zeros((7, 16), dtype=np.float32)
            for entry in manifest:
                if entry["name"] == key:
                    entry["shape"] = [7, 16]
            buffer = io.BytesIO()
            np.savez(buffer, **arrays)
            with zipfile.ZipFile(tampered, "w") as dst:
                for name in names:
                    if name == "state.npz":
                        dst.writestr(name, buffer.getvalue())
                    elif name == "state_manifest.json":
                        dst.writestr(name, json.dumps(manifest))
                    else:
                        dst.writestr(name, src.read(name))
        with pytest.raises(CheckpointError, match="specs require"):
            load_checkpoint(tampered)

    def test_handle_without_specs_is_rejected(self, tmp_path):
        from videokd import ModelHandle

        bare = ModelHandle(module=torch.nn.Linear(4, 2), num_classes=2, consumes="frame")
        with pytest.raises(CheckpointError, match="build specs"):
            save_checkpoint(bare, tmp_path / "bare.ckpt")


class TestResume:
    def test_resume_matches_uninterrupted_run(self, tmp_path, fixture_manifest, sampling_config):
        config = TeacherTrainConfig(epochs=12, batch_size=4, learning_rate=1e-2, seed=9)

        full = train_teacher(tiny_teacher(seed=9), fixture_manifest, sampling_config, config, out_dir=tmp_path / "full")
        half = train_teacher(
            tiny_teacher(seed=9), fixture_manifest, sampling_config, config, out_dir=tmp_path / "half", stop_after=6
        )
        assert len(half.history) == 6

        resumed = train_teacher(
            tiny_teacher(seed=9),
            fixture_manifest,
            sampling_config,
            config,
            out_dir=tmp_path / "resumed",
            resume=half.last_checkpoint,
        )
        assert len(resumed.history) == 12
        assert abs(resumed.history.final.val_acc - full.history.final.val_acc) < 1e-6
        assert resumed.history == full.history

    def test_resume_appends_remaining_records(self, tmp_path, fixture_manifest, sampling_config):
        from videokd import DistillParams, distill_student

        teacher = train_teacher(
            tiny_teacher(seed=10),
            fixture_manifest,
            sampling_config,
            TeacherTrainConfig(epochs=6, batch_size=4, learning_rate=1e-2, seed=0),
        ).model
        config = StudentTrainConfig(
            epochs=8, batch_size=4, learning_rate=5e-2, distill=DistillParams(alpha=0.9, tau=6.0), seed=10
        )
        half = distill_student(
            tiny_student(seed=10), teacher, fixture_manifest, sampling_config, config,
            out_dir=tmp_path / "h", stop_after=5,
        )
        resumed = distill_student(
            tiny_student(seed=10), teacher, fixture_manifest, sampling_config, config,
            out_dir=tmp_path / "r", resume=half.last_checkpoint,
        )
        assert [r.epoch for r in resumed.history] == list(range(8))
