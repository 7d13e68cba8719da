import numpy as np
import pytest

from stylemark import DatasetManifest, ImageRecord, LandmarkSet, Split


def make_landmarks(rng, count=48, width=64, height=64, lo=0.2, hi=0.8):
    xy = np.empty((count, 2))
    xy[:, 0] = rng.uniform(lo * width, hi * width, size=count)
    xy[:, 1] = rng.uniform(lo * height, hi * height, size=count)
    return LandmarkSet(xy)


def make_record(rng, rid, count=48, width=64, height=64, split=Split.TRAIN):
    return ImageRecord(
        id=rid,
        image_path=f"images/{rid}.png",
        landmarks=make_landmarks(rng, count, width, height),
        width=width,
        height=height,
        split=split,
    )


def make_manifest(seed=0, n=10, count=48, tag="fixture", width=64, height=64,
                  root="."):
    rng = np.random.default_rng(seed)
    records = [make_record(rng, f"img_{k:03d}", count, width, height)
               for k in range(n)]
    return DatasetManifest(records=records, seed=seed, tag=tag,
                           landmark_count=count, root=root)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_manifest(tmp_path):
    return make_manifest(seed=3, n=6, root=tmp_path)


@pytest.fixture
def synthetic_dataset(tmp_path_factory):
    """Session-scoped 24-image synthetic dataset with real image files."""
    from stylemark import generate_dataset

    out = tmp_path_factory.mktemp("synthetic")
    return generate_dataset(out, count=24, seed=99, image_size=48,
                            landmark_count=12)
