import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from gwshapes.shapes import build_dataset, load_dataset, load_manifest, read_ppm


def test_manifest_counts_and_distinct_indices(tmp_path):
    m = build_dataset(100, master_seed=0, out_dir=tmp_path, test_count=20)
    assert m["train_count"] == 100 and m["test_count"] == 20
    rows = (tmp_path / "attrs.csv").read_text().strip().split("\n")[1:]
    indices = [int(r.split(",")[0]) for r in rows]
    assert len(rows) == 100 and len(set(indices)) == 100
    protos = np.frombuffer((tmp_path / "proto.f64").read_bytes(), dtype="<f8")
    assert protos.shape == (100 * 11,)
    captions = (tmp_path / "captions.txt").read_text()
    assert captions.endswith("\n") and captions.count("\n") == 100


def test_regeneration_is_byte_identical(tmp_path):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    build_dataset(50, master_seed=3, out_dir=a_dir, test_count=10, images=True)
    build_dataset(50, master_seed=3, out_dir=b_dir, test_count=10, images=True)
    names = ["manifest.json", "attrs.csv", "proto.f64", "captions.txt",
             "test_attrs.csv", "test_proto.f64", "test_captions.txt"]
    match, mismatch, errors = filecmp.cmpfiles(a_dir, b_dir, names, shallow=False)
    assert mismatch == [] and errors == []
    imgs = sorted(p.name for p in (a_dir / "img").iterdir())
    assert len(imgs) == 60
    match, mismatch, errors = filecmp.cmpfiles(a_dir / "img", b_dir / "img", imgs, shallow=False)
    assert mismatch == [] and errors == []


def test_test_split_disjoint_from_train(tmp_path):
    build_dataset(40, master_seed=1, out_dir=tmp_path, test_count=15)
    train_rows = (tmp_path / "attrs.csv").read_text().strip().split("\n")[1:]
    test_rows = (tmp_path / "test_attrs.csv").read_text().strip().split("\n")[1:]
    train_idx = {int(r.split(",")[0]) for r in train_rows}
    test_idx = {int(r.split(",")[0]) for r in test_rows}
    assert len(test_rows) == 15
    assert train_idx.isdisjoint(test_idx)


def test_images_flag_controls_ppm_emission(tmp_path):
    build_dataset(5, master_seed=2, out_dir=tmp_path / "no_img", test_count=2)
    assert not (tmp_path / "no_img" / "img").exists()
    build_dataset(5, master_seed=2, out_dir=tmp_path / "img", test_count=2, images=True)
    img = read_ppm(tmp_path / "img" / "img" / "000000.ppm")
    assert img.shape == (32, 32, 3) and img.max() > 0


def test_load_regenerates_records_matching_files(tmp_path):
    build_dataset(30, master_seed=5, out_dir=tmp_path, test_count=10)
    ds = load_dataset(tmp_path)
    assert len(ds.train) == 30 and len(ds.test) == 10
    protos = np.frombuffer((tmp_path / "proto.f64").read_bytes(), dtype="<f8").reshape(30, 11)
    np.testing.assert_array_equal(ds.train.protos, protos)
    lines = (tmp_path / "test_captions.txt").read_text().strip().split("\n")
    assert [c.text for c in ds.test.captions] == lines


def test_tampered_manifest_rejected(tmp_path):
    build_dataset(10, master_seed=6, out_dir=tmp_path, test_count=5)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["master_seed"] = 7
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        load_manifest(tmp_path)


def test_invalid_count_rejected(tmp_path):
    with pytest.raises(ValueError):
        build_dataset(0, master_seed=0, out_dir=tmp_path)
