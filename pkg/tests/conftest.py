import pytest

from videokd import (
    AdapterSpec,
    BackboneSpec,
    FrontNetSpec,
    SamplingConfig,
    StudentSpec,
    build_backbone,
    build_jointnet,
    build_student,
    make_synthetic_fixture,
)
from videokd.seeding import derive_seed

FIXTURE_CLASSES = 4
FIXTURE_CLIPS_PER_CLASS = 2
FIXTURE_FRAMES = 25
FIXTURE_IMAGE_SIZE = 32


@pytest.fixture(scope="session")
def fixture_manifest(tmp_path_factory):
    """The small color fixture every pipeline test trains on."""
    out = tmp_path_factory.mktemp("fixture")
    return make_synthetic_fixture(
        num_classes=FIXTURE_CLASSES,
        clips_per_class=FIXTURE_CLIPS_PER_CLASS,
        frame_count=FIXTURE_FRAMES,
        image_size=FIXTURE_IMAGE_SIZE,
        seed=7,
        out_dir=out,
    )


@pytest.fixture(scope="session")
def sampling_config():
    return SamplingConfig(num_frames=8, crop_size=32)


def tiny_teacher(num_classes=4, seed=0, output_dim=64):
    """Small frozen-backbone teacher sized for the fixture."""
    backbone = build_backbone(
        BackboneSpec(kind="synthetic-tiny", identifier="tiny", output_dim=output_dim),
        seed=derive_seed(seed, 101),
    )
    return build_jointnet(
        backbone,
        AdapterSpec(layer_widths=(output_dim, output_dim)),
        FrontNetSpec(num_classes=num_classes, hidden_widths=(128,)),
        seed=derive_seed(seed, 102),
    )


def tiny_student(num_classes=4, seed=0, dropout_rate=0.0):
    return build_student(
        StudentSpec(architecture="tiny-conv", num_classes=num_classes, dropout_rate=dropout_rate),
        seed=derive_seed(seed, 103),
    )
