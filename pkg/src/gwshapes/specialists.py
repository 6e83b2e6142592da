"""Frozen unimodal specialists and per-domain reconstruction losses.

Three domains feed the shared workspace:

* ``vision`` - a frozen, seeded 3-layer tanh network applied to the proto
  vector, standing in for a pretrained image autoencoder's latent. Output
  coordinates are rescaled once, on a fixed probe set, to std 0.5 so loss
  magnitudes stay comparable across domains.
* ``proto`` - the identity over the 11-dim attribute vector.
* ``text`` - quantized caption bins plus the grammar trace, one-hot encoded,
  through a frozen linear map and tanh (also probe-calibrated). Captions with
  equal bins and traces collide by construction, which reproduces the
  many-to-one character of natural-language descriptions.

All weights are frozen-flagged tensors: optimizers reject them, and their
snapshot hash is recorded by every experiment.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .shapes.attributes import PROTO_DIM, ShapeConfig, encode_proto, sample_attributes
from .shapes.grammar import (
    GRID,
    N_DEGREE_BINS,
    ROT_CARDINAL,
    ROT_CORNER,
    ROT_DEGREES,
    SIZE_CLASSES,
    Caption,
    Grammar,
    default_grammar,
    generate_caption,
)

GW_LATENT_STD = 0.5
VISION_DIM = 12
TEXT_DIM = 12
CALIBRATION_PROBE = 10_000

LOSS_MSE = "mse"
LOSS_MSE_CATEGORY_CE = "mse_plus_category_ce"


@dataclass(frozen=True)
class DomainSpec:
    name: str
    latent_dim: int
    loss_kind: str


VISION_SPEC = DomainSpec("vision", VISION_DIM, LOSS_MSE)
PROTO_SPEC = DomainSpec("proto", PROTO_DIM, LOSS_MSE_CATEGORY_CE)
TEXT_SPEC = DomainSpec("text", TEXT_DIM, LOSS_MSE)


def domain_loss(spec: DomainSpec, pred: ad.Tensor, target: ad.Tensor) -> ad.Tensor:
    """Reconstruction loss in one domain's latent space.

    Proto targets combine MSE over the 8 continuous components with a
    categorical cross-entropy over the 3 one-hot category slots (slot values
    act as logits); other domains use plain MSE.
    """
    if pred.value.shape != target.value.shape or pred.value.shape[-1] != spec.latent_dim:
        raise ad.GraphError(
            f"{spec.name} loss dims: pred {pred.value.shape}, target {target.value.shape}")
    if spec.loss_kind == LOSS_MSE:
        return ad.mean_squared_error(pred, target)
    mse = ad.mean_squared_error(ad.slice_cols(pred, 3, spec.latent_dim),
                                ad.slice_cols(target, 3, spec.latent_dim))
    labels = np.argmax(target.value[:, :3], axis=1)
    ce = ad.softmax_cross_entropy(ad.slice_cols(pred, 0, 3), labels)
    return ad.add(mse, ce)


def proto_ce_floor() -> float:
    """Cross-entropy of a perfect (-1, -1, +1) one-hot against its own class."""
    z = np.array([-1.0, -1.0, 1.0])
    return float(np.log(np.exp(z).sum()) - 1.0)


def _init_linear(rng, fan_in, fan_out):
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)), np.zeros(fan_out)


class VisionEmbedder:
    """Frozen seeded tanh network 11 -> 32 -> 32 -> 12 over proto vectors."""

    def __init__(self, seed: int, config: ShapeConfig, probe_count: int = CALIBRATION_PROBE):
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        w1, b1 = _init_linear(rng, PROTO_DIM, 32)
        w2, b2 = _init_linear(rng, 32, 32)
        w3, b3 = _init_linear(rng, 32, VISION_DIM)
        probe_rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
        probe = np.stack([encode_proto(sample_attributes(probe_rng, config), config)
                          for _ in range(probe_count)])
        raw = np.tanh(np.tanh(probe @ w1 + b1) @ w2 + b2) @ w3 + b3
        gain = GW_LATENT_STD / raw.std(axis=0)
        self.arrays = {"w1": w1, "b1": b1, "w2": w2, "b2": b2,
                       "w3": w3 * gain, "b3": b3 * gain}
        self.params = [ad.parameter(v, frozen=True) for v in self.arrays.values()]

    def embed(self, protos: np.ndarray) -> np.ndarray:
        a = self.arrays
        h = np.tanh(protos @ a["w1"] + a["b1"])
        h = np.tanh(h @ a["w2"] + a["b2"])
        return h @ a["w3"] + a["b3"]


def featurize_caption(cap: Caption, grammar: Grammar) -> np.ndarray:
    """Concatenated one-hots of the caption's bins and its full choice trace."""
    return featurize_captions([cap], grammar)[0]


def _feature_layout(grammar: Grammar):
    n_shape_words = len(grammar.shape_words)
    blocks = [n_shape_words, GRID, GRID, SIZE_CLASSES, 3, 16, 16, N_DEGREE_BINS,
              len(grammar.color_names)]
    blocks += [arity for _, arity in grammar.slots]
    offsets = np.concatenate([[0], np.cumsum(blocks)])
    return offsets, int(offsets[-1])


def featurize_captions(captions: list[Caption], grammar: Grammar) -> np.ndarray:
    offsets, dim = _feature_layout(grammar)
    out = np.zeros((len(captions), dim))
    for row, cap in enumerate(captions):
        b = cap.bins
        rot_block = {ROT_CARDINAL: 5, ROT_CORNER: 6, ROT_DEGREES: 7}[b.rotation_variant]
        rot_value = b.rotation_value // 5 if b.rotation_variant == ROT_DEGREES else b.rotation_value
        hot = [
            offsets[0] + b.shape_word,
            offsets[1] + b.cell[0],
            offsets[2] + b.cell[1],
            offsets[3] + b.size_class,
            offsets[4] + b.rotation_variant,
            offsets[rot_block] + rot_value,
            offsets[8] + b.color_id,
        ]
        hot += [offsets[9 + k] + v for k, v in enumerate(cap.trace)]
        out[row, hot] = 1.0
    return out


class TextEmbedder:
    """Frozen linear map + tanh over caption bin/trace one-hots."""

    def __init__(self, seed: int, config: ShapeConfig, grammar: Grammar | None = None,
                 probe_count: int = CALIBRATION_PROBE):
        self.seed = seed
        self.grammar = grammar or default_grammar()
        _, feat_dim = _feature_layout(self.grammar)
        rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))
        w, b = _init_linear(rng, feat_dim, TEXT_DIM)
        probe_rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
        probe = [generate_caption(sample_attributes(probe_rng, config), probe_rng,
                                  self.grammar, config) for _ in range(probe_count)]
        raw = np.tanh(featurize_captions(probe, self.grammar) @ w + b)
        self.arrays = {"w": w, "b": b, "gain": GW_LATENT_STD / raw.std(axis=0)}
        self.params = [ad.parameter(v, frozen=True) for v in self.arrays.values()]

    def embed(self, captions: list[Caption]) -> np.ndarray:
        feats = featurize_captions(captions, self.grammar)
        return np.tanh(feats @ self.arrays["w"] + self.arrays["b"]) * self.arrays["gain"]


class SpecialistSet:
    """The frozen embedders for one experiment, plus snapshot bookkeeping."""

    def __init__(self, seed: int, config: ShapeConfig | None = None,
                 probe_count: int = CALIBRATION_PROBE):
        self.seed = seed
        self.config = config or ShapeConfig()
        self.vision = VisionEmbedder(seed, self.config, probe_count)
        self.text = TextEmbedder(seed, self.config, probe_count=probe_count)

    def spec(self, name: str) -> DomainSpec:
        return {"vision": VISION_SPEC, "proto": PROTO_SPEC, "text": TEXT_SPEC}[name]

    def embed(self, name: str, protos: np.ndarray, captions: list[Caption]) -> np.ndarray:
        if name == "vision":
            return self.vision.embed(protos)
        if name == "proto":
            return protos.copy()
        if name == "text":
            return self.text.embed(captions)
        raise ValueError(f"unknown domain {name!r}")

    def snapshot_hash(self) -> str:
        h = hashlib.sha256()
        for owner in (self.vision, self.text):
            for name in sorted(owner.arrays):
                h.update(name.encode())
                h.update(np.ascontiguousarray(owner.arrays[name]).astype("<f8").tobytes())
        return h.hexdigest()


_SNAPSHOT_MAGIC = b"GWSP"


def save_specialists(path: Path, specialists: SpecialistSet) -> None:
    """Raw little-endian float64 snapshot with a dims/seed header."""
    entries = []
    for prefix, owner in (("vision", specialists.vision), ("text", specialists.text)):
        for name in sorted(owner.arrays):
            entries.append((f"{prefix}.{name}", np.ascontiguousarray(owner.arrays[name], dtype="<f8")))
    with open(path, "wb") as f:
        f.write(_SNAPSHOT_MAGIC)
        f.write(struct.pack("<IQI", 1, specialists.seed, len(entries)))
        for name, arr in entries:
            encoded = name.encode()
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_specialist_arrays(path: Path) -> tuple[int, dict]:
    """Read back (seed, {name: array}) from a snapshot file."""
    data = Path(path).read_bytes()
    if data[:4] != _SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a specialist snapshot")
    version, seed, count = struct.unpack_from("<IQI", data, 4)
    if version != 1:
        raise ValueError(f"unsupported snapshot version {version}")
    pos = 4 + 16
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + name_len].decode()
        pos += name_len
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) * 8
        arrays[name] = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(shape).copy()
        pos += size
    return seed, arrays
