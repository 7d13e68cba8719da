import json

import numpy as np
import pytest

from stylemark import (
    DatasetManifest,
    ImageRecord,
    Landmark,
    LandmarkSet,
    ManifestParseError,
    RecordValidationError,
    Split,
    StylemarkError,
    load_manifest,
    save_manifest,
    split_dataset,
    union_manifests,
    validate_record,
)

from conftest import make_manifest, make_record


def test_landmark_set_requires_n_by_2():
    with pytest.raises(ValueError):
        LandmarkSet(np.zeros((5, 3)))


def test_landmark_set_iteration_and_indexing():
    lms = LandmarkSet(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert lms[1] == Landmark(3.0, 4.0, 1)
    assert [p.index for p in lms] == [0, 1]


def test_validate_record_ok(rng):
    rec = make_record(rng, "a")
    assert validate_record(rec, 48) == []


def test_validate_record_duplicate_index(rng):
    points = [Landmark(1.0, 1.0, 0), Landmark(2.0, 2.0, 0), Landmark(3.0, 3.0, 2)]
    rec = ImageRecord(id="a", image_path="a.png",
                      landmarks=LandmarkSet.from_landmarks(points),
                      width=10, height=10)
    violations = validate_record(rec, 3)
    assert any("index not unique" in v for v in violations)


def test_validate_record_nan_coordinate():
    lms = LandmarkSet(np.array([[1.0, 1.0], [np.nan, 2.0], [3.0, 3.0]]))
    rec = ImageRecord(id="a", image_path="a.png", landmarks=lms, width=10, height=10)
    violations = validate_record(rec, 3)
    assert any("non-finite" in v for v in violations)


def test_validate_record_out_of_bounds():
    # Independent bounds check: x == width + 5 must be flagged, and the
    # half-open convention means x == width is already out.
    width, height = 20, 30
    lms = LandmarkSet(np.array([[width + 5.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
    rec = ImageRecord(id="a", image_path="a.png", landmarks=lms,
                      width=width, height=height)
    violations = validate_record(rec, 3)
    assert any("out of bounds" in v for v in violations)
    edge = LandmarkSet(np.array([[float(width), 1.0], [2.0, 2.0], [3.0, 3.0]]))
    rec_edge = ImageRecord(id="b", image_path="b.png", landmarks=edge,
                           width=width, height=height)
    assert any("out of bounds" in v for v in validate_record(rec_edge, 3))


def test_validate_record_wrong_count(rng):
    rec = make_record(rng, "a", count=47)
    violations = validate_record(rec, 48)
    assert any("expected 48" in v for v in violations)


def test_round_trip_identity(tmp_path, small_manifest):
    path = tmp_path / "m.jsonl"
    save_manifest(small_manifest, path)
    loaded = load_manifest(path)
    assert loaded == small_manifest


def test_round_trip_property_randomized(tmp_path):
    # Round trip over many generated manifests, including awkward float
    # coordinates, must be exact (JSON uses shortest-round-trip floats).
    for seed in range(25):
        manifest = make_manifest(seed=seed, n=seed % 5 + 1, count=7, root=tmp_path)
        path = tmp_path / f"m{seed}.jsonl"
        save_manifest(manifest, path)
        assert load_manifest(path) == manifest


def test_round_trip_empty_manifest(tmp_path):
    manifest = DatasetManifest(records=[], seed=1, tag="empty", landmark_count=48,
                               root=tmp_path)
    path = tmp_path / "empty.jsonl"
    save_manifest(manifest, path)
    loaded = load_manifest(path)
    assert loaded == manifest
    assert len(loaded) == 0


def test_save_is_byte_deterministic(tmp_path, small_manifest):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_manifest(small_manifest, p1)
    save_manifest(small_manifest, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_two_record_file(tmp_path, rng):
    manifest = make_manifest(seed=1, n=2, root=tmp_path)
    path = tmp_path / "two.jsonl"
    save_manifest(manifest, path)
    assert len(load_manifest(path)) == 2


def test_load_rejects_wrong_landmark_count(tmp_path):
    manifest = make_manifest(seed=1, n=1, count=47, root=tmp_path)
    path = tmp_path / "m.jsonl"
    save_manifest(manifest, path)
    text = path.read_text().splitlines()
    header = json.loads(text[0])
    header["landmark_count"] = 48
    path.write_text("\n".join([json.dumps(header)] + text[1:]) + "\n")
    with pytest.raises(RecordValidationError) as exc:
        load_manifest(path)
    assert "img_000" in str(exc.value)


def test_load_rejects_out_of_bounds_record(tmp_path):
    manifest = make_manifest(seed=1, n=1, count=4, root=tmp_path)
    path = tmp_path / "m.jsonl"
    save_manifest(manifest, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["landmarks"][0][0] = rec["width"] + 5
    path.write_text(lines[0] + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(RecordValidationError) as exc:
        load_manifest(path)
    assert "out of bounds" in str(exc.value)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("not json\n")
    with pytest.raises(ManifestParseError):
        load_manifest(path)
    path2 = tmp_path / "missing_header.jsonl"
    path2.write_text('{"id": "x"}\n')
    with pytest.raises(ManifestParseError):
        load_manifest(path2)


def test_load_missing_file(tmp_path):
    with pytest.raises(ManifestParseError):
        load_manifest(tmp_path / "nope.jsonl")


def test_save_to_unwritable_location(tmp_path, small_manifest):
    # A file where a directory is needed fails for any uid, root included.
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    with pytest.raises(StylemarkError):
        save_manifest(small_manifest, blocker / "sub" / "m.jsonl")


def test_split_sizes_and_disjointness():
    manifest = make_manifest(seed=5, n=600, count=4)
    train, test = split_dataset(manifest, 500, 100, seed=7)
    assert len(train) == 500 and len(test) == 100
    train_ids, test_ids = set(train.ids()), set(test.ids())
    assert not (train_ids & test_ids)
    assert (train_ids | test_ids) <= set(manifest.ids())
    assert train.tag == "Train" and test.tag == "Test"
    assert all(r.split is Split.TRAIN for r in train)
    assert all(r.split is Split.TEST for r in test)


def test_split_zero_sizes():
    manifest = make_manifest(seed=5, n=10, count=4)
    train, test = split_dataset(manifest, 0, 0, seed=1)
    assert len(train) == 0 and len(test) == 0


def test_split_determinism(tmp_path):
    manifest = make_manifest(seed=5, n=40, count=4, root=tmp_path)
    a_train, a_test = split_dataset(manifest, 30, 10, seed=42)
    b_train, b_test = split_dataset(manifest, 30, 10, seed=42)
    assert a_train == b_train and a_test == b_test
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_manifest(a_train, pa)
    save_manifest(b_train, pb)
    assert pa.read_bytes() == pb.read_bytes()
    c_train, _ = split_dataset(manifest, 30, 10, seed=43)
    assert c_train != a_train


def test_split_insufficient_records():
    manifest = make_manifest(seed=5, n=10, count=4)
    with pytest.raises(StylemarkError, match="insufficient"):
        split_dataset(manifest, 8, 3, seed=1)


def test_union_rejects_duplicate_ids():
    m1 = make_manifest(seed=1, n=3, count=4)
    m2 = make_manifest(seed=2, n=3, count=4)  # same ids img_000..
    with pytest.raises(RecordValidationError):
        union_manifests("u", [m1, m2])


def test_union_concatenates(tmp_path):
    m1 = make_manifest(seed=1, n=3, count=4, root=tmp_path)
    m2 = make_manifest(seed=2, n=2, count=4, root=tmp_path)
    renamed = m2.with_records(
        [_rename(r, f"other_{k}") for k, r in enumerate(m2.records)], tag="other"
    )
    union = union_manifests("Train+other", [m1, renamed])
    assert len(union) == 5
    assert union.tag == "Train+other"


def _rename(record, new_id):
    from dataclasses import replace

    return replace(record, id=new_id)


def test_manifest_rejects_empty_tag():
    with pytest.raises(StylemarkError):
        DatasetManifest(records=[], seed=0, tag="", landmark_count=48)
