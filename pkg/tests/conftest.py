import numpy as np
import pytest

from hdavca.fixtures import default_scenes, synth_stereo_pair


@pytest.fixture(scope="session")
def scene_pair():
    """One deterministic textured stereo pair shared across tests."""
    return synth_stereo_pair(default_scenes()[0], 320, 240)


@pytest.fixture(scope="session")
def textured_image(scene_pair):
    return scene_pair.left


@pytest.fixture(scope="session")
def detected_keypoints(textured_image):
    from hdavca.keypoints import detect_and_describe

    return detect_and_describe(textured_image)


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    """The full self-test dataset (images, feature maps, manifest) on disk."""
    from hdavca.fixtures import write_fixture_set
    from hdavca.manifest import load_manifest

    out = tmp_path_factory.mktemp("fixture_set")
    manifest_path = write_fixture_set(out)
    return manifest_path, load_manifest(manifest_path)


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
