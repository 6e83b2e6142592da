import numpy as np
import pytest

from gwshapes import autodiff as ad
from gwshapes.optim import AdamState, adam_step
from gwshapes.shapes import ShapeConfig, encode_proto, generate_caption, sample_attributes
from gwshapes.specialists import (
    PROTO_SPEC,
    TEXT_SPEC,
    VISION_SPEC,
    SpecialistSet,
    domain_loss,
    featurize_caption,
    load_specialist_arrays,
    proto_ce_floor,
    save_specialists,
)

CFG = ShapeConfig()


@pytest.fixture(scope="module")
def specialists():
    return SpecialistSet(seed=0, config=CFG)


def sample_protos(n, seed):
    rng = np.random.default_rng(seed)
    return np.stack([encode_proto(sample_attributes(rng, CFG), CFG) for _ in range(n)])


def test_vision_embedding_deterministic(specialists):
    p = sample_protos(5, 0)
    np.testing.assert_array_equal(specialists.vision.embed(p), specialists.vision.embed(p))
    again = SpecialistSet(seed=0, config=CFG)
    assert again.snapshot_hash() == specialists.snapshot_hash()


def test_vision_embedding_empirically_injective(specialists):
    lat = specialists.vision.embed(sample_protos(10_000, 1))
    sq = np.einsum("ij,ij->i", lat, lat)
    min_d2 = np.inf
    for lo in range(0, len(lat), 1000):
        chunk = lat[lo:lo + 1000]
        d2 = sq[lo:lo + 1000, None] + sq[None, :] - 2.0 * chunk @ lat.T
        for r in range(len(chunk)):
            d2[r, lo + r] = np.inf
        min_d2 = min(min_d2, d2.min())
    assert min_d2 > 1e-6 ** 2


def test_vision_output_std_calibrated(specialists):
    lat = specialists.vision.embed(sample_protos(10_000, 2))
    std = lat.std(axis=0)
    assert np.all(std >= 0.1) and np.all(std <= 1.0)


def test_proto_embedding_is_identity(specialists):
    p = sample_protos(8, 3)
    np.testing.assert_array_equal(specialists.embed("proto", p, []), p)
    assert PROTO_SPEC.latent_dim == 11
    # decode side is identity too: reconstruction error of p against itself is 0
    assert ad.mean_squared_error(ad.tensor(p), ad.tensor(p)).item() == 0.0


def make_captions(n, seed):
    rng = np.random.default_rng(seed)
    caps, attrs = [], []
    for _ in range(n):
        a = sample_attributes(rng, CFG)
        attrs.append(a)
        caps.append(generate_caption(a, rng, config=CFG))
    return attrs, caps


def test_text_embedding_deterministic(specialists):
    _, caps = make_captions(5, 4)
    np.testing.assert_array_equal(specialists.text.embed(caps), specialists.text.embed(caps))


def test_same_attributes_different_traces_differ(specialists):
    attrs, _ = make_captions(20, 5)
    for a in attrs:
        c1 = generate_caption(a, np.random.default_rng(1), config=CFG)
        c2 = generate_caption(a, np.random.default_rng(2), config=CFG)
        assert c1.trace != c2.trace
        lat = specialists.text.embed([c1, c2])
        assert np.linalg.norm(lat[0] - lat[1]) > 0


def test_equal_bins_and_trace_collide(specialists):
    attrs, _ = make_captions(1, 6)
    a = attrs[0]
    c1 = generate_caption(a, np.random.default_rng(3), config=CFG)
    c2 = generate_caption(a, np.random.default_rng(3), config=CFG)
    lat = specialists.text.embed([c1, c2])
    np.testing.assert_array_equal(lat[0], lat[1])


def test_text_output_std_calibrated(specialists):
    _, caps = make_captions(10_000, 7)
    std = specialists.text.embed(caps).std(axis=0)
    assert np.all(std >= 0.1) and np.all(std <= 1.0)


def test_featurization_is_one_hot_blocks(specialists):
    _, caps = make_captions(50, 8)
    for cap in caps:
        f = featurize_caption(cap, specialists.text.grammar)
        assert set(np.unique(f)) <= {0.0, 1.0}
        assert f.sum() == 7 + 39  # seven bin blocks + one per trace slot


def test_domain_loss_vision_floor():
    p = ad.tensor(np.random.default_rng(9).normal(0, 1, (4, 12)))
    assert domain_loss(VISION_SPEC, p, p).item() == 0.0


def test_domain_loss_proto_floor_is_ce_floor():
    protos = ad.tensor(sample_protos(6, 10))
    loss = domain_loss(PROTO_SPEC, protos, protos)
    assert loss.item() == pytest.approx(proto_ce_floor(), abs=1e-12)


def test_domain_loss_swap_changes_mse_analytically():
    p = sample_protos(1, 11)
    pred = p.copy()
    pred[0, 4], pred[0, 5] = p[0, 5], p[0, 4]  # swap two continuous components
    base = domain_loss(PROTO_SPEC, ad.tensor(p), ad.tensor(p)).item()
    swapped = domain_loss(PROTO_SPEC, ad.tensor(pred), ad.tensor(p)).item()
    expected = ((pred[0, 4] - p[0, 4]) ** 2 + (pred[0, 5] - p[0, 5]) ** 2) / 8.0
    assert swapped - base == pytest.approx(expected, abs=1e-12)


def test_domain_loss_dim_mismatch_rejected():
    with pytest.raises(ad.GraphError):
        domain_loss(VISION_SPEC, ad.tensor(np.zeros((2, 11))), ad.tensor(np.zeros((2, 11))))


def test_frozen_parameters_rejected_by_optimizer(specialists):
    for p in specialists.vision.params + specialists.text.params:
        assert p.frozen
    with pytest.raises(ad.GraphError):
        adam_step(AdamState(), [specialists.vision.params[0]],
                  [np.zeros_like(specialists.vision.params[0].value)])


def test_snapshot_round_trip(tmp_path, specialists):
    path = tmp_path / "frozen.bin"
    save_specialists(path, specialists)
    seed, arrays = load_specialist_arrays(path)
    assert seed == 0
    np.testing.assert_array_equal(arrays["vision.w1"], specialists.vision.arrays["w1"])
    np.testing.assert_array_equal(arrays["text.gain"], specialists.text.arrays["gain"])
    save_specialists(tmp_path / "again.bin", specialists)
    assert (tmp_path / "frozen.bin").read_bytes() == (tmp_path / "again.bin").read_bytes()
