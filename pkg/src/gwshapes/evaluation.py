"""Held-out property evaluation and the odd-one-out (OOO) downstream task.

The OOO task probes representation quality: of three encoded items, two
share at least one attribute and the third is far from both on every
attribute. A small classifier trained on vision encodings (``vvv``) is then
tested on language encodings (``ttt``) or a mixed arrangement (``ttv``) to
measure cross-modal transfer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import workspace as gw
from .optim import Adam
from .training import PreparedData, evaluate_losses

OOO_ATTRIBUTES = ("shape", "location", "size", "orientation", "color")
PROBE_HIDDEN = 16
PROBE_STEPS = 5000
PROBE_BATCH = 64
PROBE_LR = 1e-3


@dataclass
class PropertyReport:
    """All objective values on the fixed test set, plus run metadata."""

    translation_to_t: float
    translation_to_v: float
    translation: float
    contrastive_literal: float
    contrastive_infonce: float
    cycle: float
    demicycle: float
    metadata: dict = field(default_factory=dict)


def eval_properties(model: gw.GwModel, data: PreparedData, metadata: dict | None = None) -> PropertyReport:
    """Gradient-free evaluation of every objective on the held-out test set."""
    losses = evaluate_losses(model, data.test_v, data.test_t)
    return PropertyReport(**losses, metadata=dict(metadata or {}))


# ---------------------------------------------------------------------------
# Odd-one-out dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OooTriplet:
    ref: int
    pos: int
    neg: int
    common_attribute: str
    odd_position: int  # where the negative sits among the three probe slots


def default_far_pool(dataset_size: int) -> int:
    return max(50, dataset_size // 1000)


def attribute_distance(protos: np.ndarray, i: int, attribute: str) -> np.ndarray:
    """Distance from record i to every record, for one named attribute.

    Works in the normalized proto coordinate space: category distance is 0
    or 2 (the one-hot diameter); location, orientation and color compare
    their coordinate groups jointly by Euclidean distance.
    """
    p = protos
    if attribute == "shape":
        return np.where(np.argmax(p[:, :3], axis=1) == np.argmax(p[i, :3]), 0.0, 2.0)
    if attribute == "location":
        return np.linalg.norm(p[:, 3:5] - p[i, 3:5], axis=1)
    if attribute == "size":
        return np.abs(p[:, 5] - p[i, 5])
    if attribute == "color":
        return np.linalg.norm(p[:, 6:9] - p[i, 6:9], axis=1)
    if attribute == "orientation":
        return np.linalg.norm(p[:, 9:11] - p[i, 9:11], axis=1)
    raise ValueError(f"unknown attribute {attribute!r}")


def min_attribute_distance(protos: np.ndarray, i: int) -> np.ndarray:
    """d(x_i, .) = minimum over the five per-attribute distances."""
    stacked = np.stack([attribute_distance(protos, i, a) for a in OOO_ATTRIBUTES])
    return stacked.min(axis=0)


def sample_triplet(protos: np.ndarray, far_pool: int, rng: np.random.Generator) -> OooTriplet:
    """One (ref, pos, neg) draw.

    The positive is the item closest to the reference on a uniformly chosen
    attribute (exact ties resolved by a seeded draw). Every other item is
    scored by min(d(., ref), d(., pos)); the negative is drawn uniformly from
    the ``far_pool`` highest-scoring items.
    """
    n = len(protos)
    ref = int(rng.integers(n))
    attribute = OOO_ATTRIBUTES[int(rng.integers(len(OOO_ATTRIBUTES)))]
    d_attr = attribute_distance(protos, ref, attribute)
    d_attr[ref] = np.inf
    ties = np.flatnonzero(d_attr == d_attr.min())
    pos = int(ties[rng.integers(len(ties))])
    score = np.minimum(min_attribute_distance(protos, ref), min_attribute_distance(protos, pos))
    score[ref] = score[pos] = -np.inf
    order = np.argsort(-score, kind="stable")
    neg = int(order[int(rng.integers(far_pool))])
    return OooTriplet(ref, pos, neg, attribute, int(rng.integers(3)))


def build_ooo_dataset(protos: np.ndarray, n_train: int, n_test: int,
                      far_pool: int | None = None, seed: int = 0) -> tuple[list, list]:
    """Sampled (train, test) triplet lists over one record set."""
    far_pool = far_pool if far_pool is not None else default_far_pool(len(protos))
    if len(protos) <= far_pool + 2:
        raise ValueError(f"dataset of {len(protos)} too small for far pool {far_pool}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 7)))
    train = [sample_triplet(protos, far_pool, rng) for _ in range(n_train)]
    test = [sample_triplet(protos, far_pool, rng) for _ in range(n_test)]
    return train, test


def arrange_triplets(triplets: list[OooTriplet]) -> tuple[np.ndarray, np.ndarray]:
    """(n, 3) record indices with the negative at its odd position, and labels."""
    idx = np.empty((len(triplets), 3), dtype=np.int64)
    labels = np.empty(len(triplets), dtype=np.int64)
    for k, t in enumerate(triplets):
        slots = [t.ref, t.pos]
        slots.insert(t.odd_position, t.neg)
        idx[k] = slots
        labels[k] = t.odd_position
    return idx, labels


# ---------------------------------------------------------------------------
# Probe
# ---------------------------------------------------------------------------


class OooProbe:
    """Two-layer classifier: concat of three encodings -> 16 ReLU -> 3."""

    def __init__(self, in_dim: int, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 8)))
        self.net = gw.Mlp.seeded(rng, [3 * in_dim, PROBE_HIDDEN, 3])

    def logits(self, inputs: ad.Tensor) -> ad.Tensor:
        return self.net.forward(inputs)

    def params(self) -> list[ad.Tensor]:
        return self.net.params()


def _probe_inputs(encoded: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return encoded[idx].reshape(len(idx), -1)


def train_ooo_probe(inputs: np.ndarray, labels: np.ndarray, seed: int = 0,
                    steps: int = PROBE_STEPS, encode_fn=None,
                    extra_params: list | None = None) -> OooProbe:
    """Fit the odd-position classifier with Adam (lr 1e-3, batch 64).

    ``encode_fn``/``extra_params`` serve the task-optimized baseline, where a
    trainable per-slot encoder sits between the raw inputs and the probe.
    """
    per_slot = inputs.shape[1] // 3 if encode_fn is None else gw.GW_DIM
    probe = OooProbe(per_slot, seed)
    opt = Adam(probe.params() + list(extra_params or []), learning_rate=PROBE_LR)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 9)))
    for _ in range(steps):
        take = rng.integers(0, len(inputs), PROBE_BATCH)
        x = ad.tensor(inputs[take])
        if encode_fn is not None:
            x = encode_fn(x)
        loss = ad.softmax_cross_entropy(probe.logits(x), labels[take])
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
    return probe


def probe_accuracy(probe: OooProbe, inputs: np.ndarray, labels: np.ndarray,
                   encode_fn=None) -> float:
    x = ad.tensor(inputs)
    if encode_fn is not None:
        x = encode_fn(x)
    pred = np.argmax(probe.logits(x).value, axis=1)
    return float(np.mean(pred == labels))


def encode_records(model: gw.GwModel | None, side: str, latents: np.ndarray) -> np.ndarray:
    """Workspace encodings of raw specialist latents (or the latents themselves)."""
    if model is None:
        return latents
    return model.encode(side, ad.tensor(latents)).value


def eval_ooo(probe: OooProbe, model: gw.GwModel | None, data: PreparedData,
             triplets: list[OooTriplet], mode: str, seed: int = 0) -> float:
    """Accuracy of a vvv-trained probe under vvv / ttt / ttv encodings.

    ``ttv`` encodes one uniformly chosen slot per triplet through the vision
    encoder and the remaining two through the language encoder.
    """
    idx, labels = arrange_triplets(triplets)
    enc_v = encode_records(model, "v", data.train_v)
    if mode == "vvv":
        return probe_accuracy(probe, _probe_inputs(enc_v, idx), labels)
    enc_t = encode_records(model, "t", data.train_t)
    if mode == "ttt":
        return probe_accuracy(probe, _probe_inputs(enc_t, idx), labels)
    if mode == "ttv":
        rng = np.random.default_rng(np.random.SeedSequence((seed, 10)))
        vision_slot = rng.integers(0, 3, len(idx))
        inputs = _probe_inputs(enc_t, idx).copy()
        d = enc_v.shape[1]
        for k, slot in enumerate(vision_slot):
            inputs[k, slot * d:(slot + 1) * d] = enc_v[idx[k, slot]]
        return probe_accuracy(probe, inputs, labels)
    raise ValueError(f"unknown OOO mode {mode!r}")


def run_ooo_evaluation(model: gw.GwModel, data: PreparedData, train_triplets: list,
                       test_triplets: list, seed: int = 0,
                       steps: int = PROBE_STEPS) -> dict:
    """Train the vvv probe on one model's frozen encoders; report all modes."""
    idx, labels = arrange_triplets(train_triplets)
    enc_v = encode_records(model, "v", data.train_v)
    probe = train_ooo_probe(_probe_inputs(enc_v, idx), labels, seed=seed, steps=steps)
    return {mode: eval_ooo(probe, model, data, test_triplets, mode, seed=seed)
            for mode in ("vvv", "ttt", "ttv")}


def run_ooo_baselines(data: PreparedData, train_triplets: list, test_triplets: list,
                      seed: int = 0, steps: int = PROBE_STEPS) -> dict:
    """The three reference setups around the same probe shape and budget:
    a task-optimized encoder trained end-to-end, no encoder at all, and a
    random frozen encoder."""
    idx, labels = arrange_triplets(train_triplets)
    test_idx, test_labels = arrange_triplets(test_triplets)
    raw_train = _probe_inputs(data.train_v, idx)
    raw_test = _probe_inputs(data.train_v, test_idx)
    d = data.v_spec.latent_dim
    results = {}

    task_encoder = gw.Mlp.seeded(np.random.default_rng(np.random.SeedSequence((seed, 11))),
                                 [d] + [gw.HIDDEN_DIM] * gw.N_HIDDEN + [gw.GW_DIM])

    def through_encoder(x: ad.Tensor) -> ad.Tensor:
        parts = [task_encoder.forward(ad.slice_cols(x, k * d, (k + 1) * d)) for k in range(3)]
        return ad.concat_cols(parts)

    probe = train_ooo_probe(raw_train, labels, seed=seed, steps=steps,
                            encode_fn=through_encoder, extra_params=task_encoder.params())
    results["task_optimized"] = probe_accuracy(probe, raw_test, test_labels,
                                               encode_fn=through_encoder)

    probe = train_ooo_probe(raw_train, labels, seed=seed, steps=steps)
    results["no_encoder"] = probe_accuracy(probe, raw_test, test_labels)

    frozen = gw.Mlp.seeded(np.random.default_rng(np.random.SeedSequence((seed, 12))),
                           [d] + [gw.HIDDEN_DIM] * gw.N_HIDDEN + [gw.GW_DIM])
    enc = frozen.forward(ad.tensor(data.train_v)).value
    probe = train_ooo_probe(_probe_inputs(enc, idx), labels, seed=seed, steps=steps)
    results["random_encoder"] = probe_accuracy(probe, _probe_inputs(enc, test_idx), test_labels)
    return results
