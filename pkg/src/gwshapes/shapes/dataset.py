"""Dataset generation, on-disk export and manifest-driven reload.

Every record derives from an independent per-index seed, so any record (and
therefore the whole dataset) can be regenerated bit-exactly from the
manifest. The on-disk files are an export of that deterministic stream:

    manifest.json   config, seeds, counts, asset hashes
    attrs.csv       index,category,x,y,size,rotation,h,s,l,r,g,b
    proto.f64       raw little-endian float64, 11 per record
    captions.txt    one sentence per line (LF)
    img/NNNNNN.ppm  optional binary P6 renders

Test records use indices [train_count, train_count + test_count) of the
same seed stream and are written to test_* files, which keeps them disjoint
from every train record by construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attributes import PROTO_DIM, Attributes, ShapeConfig, encode_proto, sample_attributes
from .grammar import Caption, Grammar, default_grammar, generate_caption, _asset_text
from .render import render_image, write_ppm

FORMAT_VERSION = 1


@dataclass
class Records:
    """One split's worth of generated records (kept in memory)."""

    attributes: list[Attributes]
    protos: np.ndarray  # (n, 11)
    captions: list[Caption]

    def __len__(self):
        return len(self.attributes)


@dataclass
class Dataset:
    config: ShapeConfig
    master_seed: int
    train: Records
    test: Records


def record_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, index)))


def generate_records(master_seed: int, start: int, count: int,
                     config: ShapeConfig, grammar: Grammar) -> Records:
    attrs, captions = [], []
    protos = np.empty((count, PROTO_DIM))
    for i in range(count):
        rng = record_rng(master_seed, start + i)
        a = sample_attributes(rng, config)
        attrs.append(a)
        protos[i] = encode_proto(a, config)
        captions.append(generate_caption(a, rng, grammar, config))
    return Records(attrs, protos, captions)


def generate_dataset(master_seed: int, train_count: int, test_count: int = 1000,
                     config: ShapeConfig | None = None,
                     grammar: Grammar | None = None) -> Dataset:
    config = config or ShapeConfig()
    grammar = grammar or default_grammar()
    train = generate_records(master_seed, 0, train_count, config, grammar)
    test = generate_records(master_seed, train_count, test_count, config, grammar)
    return Dataset(config, master_seed, train, test)


def asset_hashes() -> dict:
    return {name: hashlib.sha256(_asset_text(name).encode()).hexdigest()
            for name in ("colors.tsv", "grammar.toml")}


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dataset_config_dict(master_seed, train_count, test_count, images, config) -> dict:
    return {
        "format": "gwshapes-dataset",
        "version": FORMAT_VERSION,
        "master_seed": master_seed,
        "train_count": train_count,
        "test_count": test_count,
        "images": images,
        "shape_config": dataclasses.asdict(config),
        "asset_hashes": asset_hashes(),
    }


def _float(x: float) -> str:
    return f"{x:.17g}"


def _write_split(out: Path, prefix: str, records: Records, start_index: int,
                 images: bool, config: ShapeConfig) -> list[str]:
    names = [f"{prefix}attrs.csv", f"{prefix}proto.f64", f"{prefix}captions.txt"]
    lines = ["index,category,x,y,size,rotation,h,s,l,r,g,b"]
    for i, a in enumerate(records.attributes):
        h, s, l = a.color_hsl
        r, g, b = a.color_rgb
        lines.append(",".join([str(start_index + i), str(a.category),
                               _float(a.x), _float(a.y), _float(a.size), _float(a.rotation),
                               _float(h), _float(s), _float(l), str(r), str(g), str(b)]))
    (out / names[0]).write_text("\n".join(lines) + "\n")
    (out / names[1]).write_bytes(records.protos.astype("<f8").tobytes())
    (out / names[2]).write_text("\n".join(c.text for c in records.captions) + "\n")
    if images:
        img_dir = out / "img"
        img_dir.mkdir(exist_ok=True)
        for i, a in enumerate(records.attributes):
            write_ppm(img_dir / f"{start_index + i:06d}.ppm", render_image(a, config))
        names.append("img/")
    return names


def build_dataset(train_count: int, master_seed: int, out_dir: Path,
                  images: bool = False, test_count: int = 1000,
                  config: ShapeConfig | None = None) -> dict:
    """Generate, export and describe one dataset; returns the manifest dict."""
    if train_count < 1:
        raise ValueError("train_count must be >= 1")
    config = config or ShapeConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_dataset(master_seed, train_count, test_count, config)
    files = _write_split(out, "", ds.train, 0, images, config)
    files += _write_split(out, "test_", ds.test, train_count, images, config)
    manifest = dataset_config_dict(master_seed, train_count, test_count, images, config)
    manifest["config_hash"] = hashlib.sha256(_canonical(manifest).encode()).hexdigest()
    manifest["files"] = files
    (out / "manifest.json").write_text(_canonical(manifest) + "\n")
    return manifest


def load_manifest(dataset_dir: Path) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    manifest = json.loads(path.read_text())
    check = {k: v for k, v in manifest.items() if k not in ("config_hash", "files")}
    if hashlib.sha256(_canonical(check).encode()).hexdigest() != manifest["config_hash"]:
        raise ValueError(f"manifest config hash mismatch in {path}")
    if manifest["asset_hashes"] != asset_hashes():
        raise ValueError(f"dataset {path} was built with different grammar/color assets")
    return manifest


def load_dataset(dataset_dir: Path) -> Dataset:
    """Regenerate the full dataset from its manifest seed (verifying hashes)."""
    m = load_manifest(dataset_dir)
    config = ShapeConfig(**m["shape_config"])
    return generate_dataset(m["master_seed"], m["train_count"], m["test_count"], config)
