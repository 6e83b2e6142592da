import math

import numpy as np
import pytest

from gwshapes import autodiff as ad
from gwshapes import workspace as gw
from gwshapes.specialists import DomainSpec, PROTO_SPEC, VISION_SPEC, proto_ce_floor

TOY12 = DomainSpec("vision", 12, "mse")
TOY12_T = DomainSpec("text", 12, "mse")


def pad12(y):
    out = np.zeros((y.shape[0], 12))
    out[:, : y.shape[1]] = y
    return out


@pytest.fixture(scope="module")
def ident12():
    return gw.identity_gw_model(TOY12, TOY12_T)


@pytest.fixture(scope="module")
def ident_proto():
    return gw.identity_gw_model(VISION_SPEC, PROTO_SPEC)


@pytest.fixture(scope="module")
def random_model():
    return gw.make_gw_model(VISION_SPEC, PROTO_SPEC, seed=123)


def batch(rng, n, d):
    return ad.tensor(rng.normal(0, 0.7, (n, d)))


def test_identity_translate_is_identity(ident12):
    z = batch(np.random.default_rng(0), 5, 12)
    np.testing.assert_array_equal(ident12.translate("v", "v", z).value, z.value)
    np.testing.assert_array_equal(ident12.translate("v", "t", z).value, z.value)


def test_translate_deterministic(random_model):
    z = batch(np.random.default_rng(1), 4, 12)
    a = random_model.translate("v", "t", z).value
    b = random_model.translate("v", "t", z).value
    assert a.tobytes() == b.tobytes()


def test_translate_composition_equals_cycle_floats(random_model):
    z = batch(np.random.default_rng(2), 4, 12)
    once = random_model.translate("v", "t", z)
    back = random_model.translate("t", "v", once)
    cyc = ad.mean_squared_error(back, z)
    direct = gw.loss_cycle(random_model, z, None)
    assert cyc.item() * 0.5 == direct.item()


def test_translate_unknown_side_rejected(random_model):
    with pytest.raises(gw.ConfigError):
        random_model.translate("v", "x", batch(np.random.default_rng(3), 2, 12))


def proto_batch(rng, n):
    """Valid proto rows: +-1 one-hot category slots, continuous rest."""
    y = np.clip(rng.normal(0, 0.4, (n, 11)), -1, 1)
    y[:, :3] = -1.0
    y[np.arange(n), rng.integers(0, 3, n)] = 1.0
    return y


def test_translation_floor_on_identity_proto_fixture(ident_proto):
    yt = proto_batch(np.random.default_rng(4), 6)
    xv = pad12(yt)
    loss = gw.loss_translation(ident_proto, ad.tensor(xv), ad.tensor(yt))
    assert loss.item() == pytest.approx(0.5 * proto_ce_floor(), abs=1e-9)


def test_translation_direction_contribution_is_one_over_dim(ident12):
    y = np.zeros((1, 12))
    x = y.copy()
    x[0, 0] = 1.0  # v->t prediction lands one unit off on the first coordinate
    loss = gw.loss_translation(ident12, ad.tensor(x), ad.tensor(y))
    # both directions see the same unit error here: 0.5 * (1/12 + 1/12)
    assert loss.item() == pytest.approx(1.0 / 12.0, abs=1e-15)


def test_translation_symmetric_under_side_swap(random_model):
    rng = np.random.default_rng(5)
    xv = batch(rng, 4, 12)
    yt = ad.tensor(np.clip(rng.normal(0, 0.4, (4, 11)), -1, 1))
    swapped = gw.GwModel(
        {"v": random_model.specs["t"], "t": random_model.specs["v"]},
        {"v": random_model.encoders["t"], "t": random_model.encoders["v"]},
        {"v": random_model.decoders["t"], "t": random_model.decoders["v"]},
    )
    a = gw.loss_translation(random_model, xv, yt).item()
    b = gw.loss_translation(swapped, yt, xv).item()
    assert a == pytest.approx(b, rel=1e-15)


def test_contrastive_literal_aligned_orthogonal_near_zero(ident12):
    x = np.zeros((2, 12))
    x[0, 0] = x[1, 1] = 1.0
    loss = gw.loss_contrastive(ident12, ad.tensor(x), ad.tensor(x), gw.LITERAL)
    assert 0.0 <= loss.item() < 3e-6  # clamp shifts the exact 0 by O(eps)


def test_contrastive_literal_collapsed_is_large(ident12):
    row = np.zeros((2, 12))
    row[:, 3] = 1.0
    loss = gw.loss_contrastive(ident12, ad.tensor(row), ad.tensor(row), gw.LITERAL)
    expected = -2.0 * math.log(gw.CONTRASTIVE_EPS) / 4.0
    assert loss.item() == pytest.approx(expected, rel=1e-6)


def test_contrastive_infonce_closed_form(ident12):
    x = np.zeros((3, 12))
    x[0, 0] = x[1, 1] = x[2, 2] = 1.0
    loss = gw.loss_contrastive(ident12, ad.tensor(x), ad.tensor(x), gw.INFONCE)
    t = 1.0 / gw.INFONCE_TEMPERATURE
    expected = -math.log(math.exp(t) / (math.exp(t) + 2.0))
    assert loss.item() == pytest.approx(expected, rel=1e-12)


def test_contrastive_needs_two_rows(ident12):
    x = np.ones((1, 12))
    with pytest.raises(ad.GraphError):
        gw.loss_contrastive(ident12, ad.tensor(x), ad.tensor(x))


def test_contrastive_permutation_equivariant(random_model):
    rng = np.random.default_rng(6)
    xv = rng.normal(0, 1, (6, 12))
    yt = np.clip(rng.normal(0, 0.4, (6, 11)), -1, 1)
    perm = rng.permutation(6)
    a = gw.loss_contrastive(random_model, ad.tensor(xv), ad.tensor(yt), gw.LITERAL).item()
    b = gw.loss_contrastive(random_model, ad.tensor(xv[perm]), ad.tensor(yt[perm]), gw.LITERAL).item()
    assert a == pytest.approx(b, rel=1e-12)


def test_contrastive_gives_decoders_zero_gradient(random_model):
    rng = np.random.default_rng(7)
    xv = batch(rng, 4, 12)
    yt = ad.tensor(np.clip(rng.normal(0, 0.4, (4, 11)), -1, 1))
    loss = gw.loss_contrastive(random_model, xv, yt, gw.LITERAL)
    ad.backward(loss)
    assert all(p.grad is None for p in random_model.decoder_params())
    assert any(p.grad is not None and np.any(p.grad != 0) for p in random_model.encoder_params())


def test_cycle_zero_on_identity(ident12):
    z = batch(np.random.default_rng(8), 5, 12)
    assert gw.loss_cycle(ident12, z, z).item() == 0.0
    assert gw.loss_demicycle(ident12, z, z).item() == 0.0


def test_cycle_single_vector_offset():
    model = gw.identity_gw_model(TOY12, TOY12_T)
    model.decoders["v"].biases[-1].value[0] += 0.1
    uv = ad.tensor(np.zeros((1, 12)))
    loss = gw.loss_cycle(model, uv, None)  # other domain contributes 0
    assert loss.item() == pytest.approx(0.5 * 0.01 / 12.0, abs=1e-15)


def test_cycle_requires_some_batch(ident12):
    with pytest.raises(ad.GraphError):
        gw.loss_cycle(ident12, None, None)


def test_demicycle_equals_self_translate_path(random_model):
    rng = np.random.default_rng(9)
    uv = batch(rng, 3, 12)
    ut = ad.tensor(np.clip(rng.normal(0, 0.4, (3, 11)), -1, 1))
    manual = 0.5 * (ad.mean_squared_error(random_model.translate("v", "v", uv), uv).item()
                    + ad.mean_squared_error(random_model.translate("t", "t", ut), ut).item())
    assert gw.loss_demicycle(random_model, uv, ut).item() == pytest.approx(manual, rel=1e-15)
    assert gw.loss_demicycle(random_model, uv, ut).item() > 0.0


def test_relations_hold_on_identity_fixture(ident12):
    # R1/R2/R4 consistency: with analytically inverse encoders/decoders and
    # matched orthogonal data, translation, pre-clamp contrastive and
    # demi-cycle losses all sit at their floors simultaneously.
    x = np.zeros((4, 12))
    for i in range(4):
        x[i, i] = 0.9
    xt, yt = ad.tensor(x), ad.tensor(x)
    assert gw.loss_translation(ident12, xt, yt).item() == 0.0
    assert gw.loss_demicycle(ident12, xt, yt).item() == 0.0
    assert gw.loss_cycle(ident12, xt, yt).item() == 0.0
    assert gw.loss_contrastive(ident12, xt, yt, gw.LITERAL).item() < 3e-6


def test_total_loss_translation_only_equals_term(random_model):
    rng = np.random.default_rng(10)
    xv = batch(rng, 4, 12)
    yt = ad.tensor(np.clip(rng.normal(0, 0.4, (4, 11)), -1, 1))
    weights = gw.default_weights(gw.TRANSLATION_ONLY)
    total, breakdown = gw.total_loss(random_model, weights, xv, yt, xv, yt)
    assert total.item() == pytest.approx(breakdown["translation"], rel=1e-15)
    assert math.isfinite(breakdown["contrastive"])  # reported despite zero weight


def test_total_loss_scaling_linearity(random_model):
    rng = np.random.default_rng(11)
    xv = batch(rng, 4, 12)
    yt = ad.tensor(np.clip(rng.normal(0, 0.4, (4, 11)), -1, 1))
    w1 = gw.LossWeights(1.0, 0.5, 0.25, 0.125)
    w2 = gw.LossWeights(2.0, 1.0, 0.5, 0.25)
    t1, b1 = gw.total_loss(random_model, w1, xv, yt, xv, yt)
    t2, b2 = gw.total_loss(random_model, w2, xv, yt, xv, yt)
    assert t2.item() == pytest.approx(2.0 * t1.item(), rel=1e-12)
    for key in ("translation", "contrastive", "cycle", "demicycle"):
        assert b1[key] == pytest.approx(b2[key], rel=1e-15)


def test_total_loss_breakdown_resums(random_model):
    rng = np.random.default_rng(12)
    xv = batch(rng, 5, 12)
    yt = ad.tensor(np.clip(rng.normal(0, 0.4, (5, 11)), -1, 1))
    w = gw.LossWeights(1.0, 2.0, 0.5, 3.0)
    total, b = gw.total_loss(random_model, w, xv, yt, xv, yt)
    resum = (w.translation * b["translation"] + w.contrastive * b["contrastive"]
             + w.cycle * b["cycle"] + w.demicycle * b["demicycle"])
    assert abs(total.item() - resum) < 1e-12


def test_negative_weight_rejected():
    with pytest.raises(gw.ConfigError):
        gw.LossWeights(translation=-1.0)


def test_variant_constraints():
    gw.default_weights(gw.ALL_SUP_ALL_CYCLES)
    with pytest.raises(gw.ConfigError):
        gw.LossWeights(1, 1, 0, 0).validate_for(gw.TRANSLATION_ONLY)
    with pytest.raises(gw.ConfigError):
        gw.LossWeights(1, 0, 1, 0).validate_for(gw.TRANS_CONT)
    with pytest.raises(gw.ConfigError):
        gw.LossWeights(1, 1, 1, 0).validate_for(gw.ALL_SUP_ALL_CYCLES)
    gw.LossWeights(0, 1, 0, 0).validate_for(gw.TRANS_CONT)  # calibration run shape


def test_has_workspace_tags():
    assert {v for v in gw.VARIANTS if gw.has_workspace(v)} == {
        gw.TRANS_CONT, gw.TRANS_DEMI_CYCLES, gw.ALL_SUP_ALL_CYCLES}


def test_gradient_matches_finite_differences_per_variant():
    # sampled-coordinate central differences through the full objective
    rng = np.random.default_rng(13)
    model = gw.make_gw_model(VISION_SPEC, PROTO_SPEC, seed=5)
    xv = rng.normal(0, 0.7, (4, 12))
    yt = np.clip(rng.normal(0, 0.4, (4, 11)), -1, 1)
    uv = rng.normal(0, 0.7, (3, 12))
    ut = np.clip(rng.normal(0, 0.4, (3, 11)), -1, 1)
    weights = gw.LossWeights(1.0, 1.0, 1.0, 1.0)

    def value():
        t, _ = gw.total_loss(model, weights, ad.tensor(xv), ad.tensor(yt),
                             ad.tensor(uv), ad.tensor(ut), report_inactive=False)
        return t.item()

    total, _ = gw.total_loss(model, weights, ad.tensor(xv), ad.tensor(yt),
                             ad.tensor(uv), ad.tensor(ut), report_inactive=False)
    ad.backward(total)
    h = 1e-6
    for p in model.params():
        flat = p.value.reshape(-1)
        gflat = (p.grad if p.grad is not None else np.zeros_like(p.value)).reshape(-1)
        for i in rng.choice(flat.size, size=3, replace=False):
            orig = flat[i]
            flat[i] = orig + h
            up = value()
            flat[i] = orig - h
            down = value()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            assert gflat[i] == pytest.approx(fd, rel=1e-3, abs=1e-7)


def test_checkpoint_round_trip(tmp_path, random_model):
    header = {"variant": gw.ALL_SUP_ALL_CYCLES, "alphas": [1, 1, 1, 1], "seeds": [1, 2, 3]}
    path = tmp_path / "model.bin"
    gw.save_checkpoint(path, random_model, header)
    meta, loaded = gw.load_checkpoint(path)
    assert meta["variant"] == gw.ALL_SUP_ALL_CYCLES
    for a, b in zip(random_model.params(), loaded.params()):
        np.testing.assert_array_equal(a.value, b.value)
    gw.save_checkpoint(tmp_path / "again.bin", random_model, header)
    assert path.read_bytes() == (tmp_path / "again.bin").read_bytes()
