"""The shared-workspace model: per-domain encoders/decoders and the four
training objectives (translation, contrastive alignment, full cycles,
demi-cycles) with their weighted combination.

The model connects two sides, ``v`` (vision latents) and ``t`` (the language
side: proto vectors or text latents). Each side has a feed-forward encoder
into the 12-dim workspace and a decoder back out; translating from one side
to the other is decode-after-encode, and translating a side to itself is the
demi-cycle composition.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .specialists import DomainSpec, domain_loss

GW_DIM = 12
HIDDEN_DIM = 256
N_HIDDEN = 3

TRANSLATION_ONLY = "translation_only"
TRANS_CONT = "trans_cont"
TRANS_FULL_CYCLES = "trans_full_cycles"
TRANS_DEMI_CYCLES = "trans_demi_cycles"
ALL_SUP_ALL_CYCLES = "all_sup_all_cycles"
VARIANTS = (TRANSLATION_ONLY, TRANS_CONT, TRANS_FULL_CYCLES, TRANS_DEMI_CYCLES, ALL_SUP_ALL_CYCLES)

LITERAL = "literal"
INFONCE = "infonce"
CONTRASTIVE_EPS = 1e-6
INFONCE_TEMPERATURE = 0.07


class ConfigError(ValueError):
    pass


def has_workspace(variant: str) -> bool:
    """True when the training objectives force cross-side encoder alignment."""
    return variant in (TRANS_CONT, TRANS_DEMI_CYCLES, ALL_SUP_ALL_CYCLES)


@dataclass(frozen=True)
class LossWeights:
    translation: float = 1.0
    contrastive: float = 0.0
    cycle: float = 0.0
    demicycle: float = 0.0

    def __post_init__(self):
        if min(self.translation, self.contrastive, self.cycle, self.demicycle) < 0:
            raise ConfigError(f"loss weights must be non-negative: {self}")

    def validate_for(self, variant: str) -> None:
        zero = {
            TRANSLATION_ONLY: ("contrastive", "cycle", "demicycle"),
            TRANS_CONT: ("cycle", "demicycle"),
            TRANS_FULL_CYCLES: ("contrastive", "demicycle"),
            TRANS_DEMI_CYCLES: ("contrastive", "cycle"),
            ALL_SUP_ALL_CYCLES: (),
        }
        if variant not in zero:
            raise ConfigError(f"unknown variant {variant!r}")
        for name in zero[variant]:
            if getattr(self, name) != 0.0:
                raise ConfigError(f"{variant} requires {name} weight 0, got {getattr(self, name)}")
        if variant == TRANSLATION_ONLY and self.translation <= 0.0:
            raise ConfigError("translation_only requires a positive translation weight")
        if variant == ALL_SUP_ALL_CYCLES and min(
                self.translation, self.contrastive, self.cycle, self.demicycle) <= 0.0:
            raise ConfigError("all_sup_all_cycles requires all four weights positive")


def default_weights(variant: str, contrastive: float = 1.0, cycle: float = 1.0,
                    demicycle: float = 1.0) -> LossWeights:
    w = LossWeights(
        translation=1.0,
        contrastive=contrastive if variant in (TRANS_CONT, ALL_SUP_ALL_CYCLES) else 0.0,
        cycle=cycle if variant in (TRANS_FULL_CYCLES, ALL_SUP_ALL_CYCLES) else 0.0,
        demicycle=demicycle if variant in (TRANS_DEMI_CYCLES, ALL_SUP_ALL_CYCLES) else 0.0,
    )
    w.validate_for(variant)
    return w


class Mlp:
    """Feed-forward stack: ReLU hidden layers, linear output."""

    def __init__(self, weights: list[Tensor], biases: list[Tensor]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def seeded(cls, rng: np.random.Generator, dims: list[int]) -> "Mlp":
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(ad.parameter(rng.uniform(-bound, bound, (fan_in, fan_out))))
            biases.append(ad.parameter(rng.uniform(-bound, bound, fan_out)))
        return cls(weights, biases)

    @classmethod
    def identity(cls, in_dim: int, out_dim: int, hidden: int = HIDDEN_DIM,
                 n_hidden: int = N_HIDDEN) -> "Mlp":
        """Exact identity on the first min(in, out) coordinates through ReLU.

        The first layer splits x into positive and negative parts, the hidden
        layers pass them through, and the output layer recombines them; extra
        output coordinates are zero (pad) and extra inputs are dropped
        (truncate).
        """
        d = min(in_dim, out_dim)
        if 2 * d > hidden:
            raise ConfigError(f"hidden width {hidden} too small for identity on {d} dims")
        first = np.zeros((in_dim, hidden))
        first[:d, :d] = np.eye(d)
        first[:d, d:2 * d] = -np.eye(d)
        mid = np.zeros((hidden, hidden))
        mid[:2 * d, :2 * d] = np.eye(2 * d)
        last = np.zeros((hidden, out_dim))
        last[:d, :d] = np.eye(d)
        last[d:2 * d, :d] = -np.eye(d)
        mats = [first] + [mid] * (n_hidden - 1) + [last]
        dims = [in_dim] + [hidden] * n_hidden + [out_dim]
        return cls([ad.parameter(m) for m in mats], [ad.parameter(np.zeros(w)) for w in dims[1:]])

    def forward(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.bias_add(ad.matmul(h, w), b)
            if k < last:
                h = ad.relu(h)
        return h

    def params(self) -> list[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]


class GwModel:
    """Encoders and decoders for the two sides of one training run."""

    def __init__(self, specs: dict[str, DomainSpec], encoders: dict[str, Mlp],
                 decoders: dict[str, Mlp], init_seed: int | None = None):
        self.specs = specs
        self.encoders = encoders
        self.decoders = decoders
        self.init_seed = init_seed
        for side in ("v", "t"):
            enc, dec = encoders[side], decoders[side]
            if enc.weights[-1].value.shape[1] != GW_DIM or dec.weights[0].value.shape[0] != GW_DIM:
                raise ConfigError(f"side {side!r} must meet the {GW_DIM}-dim workspace")

    def encode(self, side: str, x: Tensor) -> Tensor:
        return self.encoders[side].forward(x)

    def decode(self, side: str, h: Tensor) -> Tensor:
        return self.decoders[side].forward(h)

    def translate(self, frm: str, to: str, x: Tensor) -> Tensor:
        """decode_to(encode_from(x)); frm == to performs the demi-cycle."""
        if frm not in self.specs or to not in self.specs:
            raise ConfigError(f"unknown side in translate({frm!r}, {to!r})")
        return self.decode(to, self.encode(frm, x))

    def params(self) -> list[Tensor]:
        out = []
        for side in ("v", "t"):
            out += self.encoders[side].params()
        for side in ("v", "t"):
            out += self.decoders[side].params()
        return out

    def encoder_params(self) -> list[Tensor]:
        return self.encoders["v"].params() + self.encoders["t"].params()

    def decoder_params(self) -> list[Tensor]:
        return self.decoders["v"].params() + self.decoders["t"].params()


def make_gw_model(v_spec: DomainSpec, t_spec: DomainSpec, seed: int) -> GwModel:
    """Seeded uniform(+-1/sqrt(fan_in)) init; encoder input width follows the domain."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 4)))
    specs = {"v": v_spec, "t": t_spec}
    encoders, decoders = {}, {}
    for side in ("v", "t"):
        d = specs[side].latent_dim
        encoders[side] = Mlp.seeded(rng, [d] + [HIDDEN_DIM] * N_HIDDEN + [GW_DIM])
        decoders[side] = Mlp.seeded(rng, [GW_DIM] + [HIDDEN_DIM] * N_HIDDEN + [d])
    return GwModel(specs, encoders, decoders, init_seed=seed)


def identity_gw_model(v_spec: DomainSpec, t_spec: DomainSpec) -> GwModel:
    """Fixture with exact identity encoders/decoders (pad/truncate across dims)."""
    specs = {"v": v_spec, "t": t_spec}
    encoders = {s: Mlp.identity(specs[s].latent_dim, GW_DIM) for s in specs}
    decoders = {s: Mlp.identity(GW_DIM, specs[s].latent_dim) for s in specs}
    return GwModel(specs, encoders, decoders)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def _require_rows(x: Tensor, least: int, what: str) -> None:
    if x is None or x.value.ndim != 2 or x.value.shape[0] < least:
        raise ad.GraphError(f"{what} needs a batch of at least {least} rows")


def _translation_terms(model: GwModel, hv: Tensor, ht: Tensor,
                       xv: Tensor, yt: Tensor) -> Tensor:
    to_t = domain_loss(model.specs["t"], model.decode("t", hv), yt)
    to_v = domain_loss(model.specs["v"], model.decode("v", ht), xv)
    return ad.scale(ad.add(to_t, to_v), 0.5)


def loss_translation(model: GwModel, xv: Tensor, yt: Tensor) -> Tensor:
    """Both translation directions on a paired batch, averaged with weight 0.5."""
    _require_rows(xv, 1, "translation")
    return _translation_terms(model, model.encode("v", xv), model.encode("t", yt), xv, yt)


def _contrastive_from(hv: Tensor, ht: Tensor, mode: str) -> Tensor:
    b = hv.value.shape[0]
    cos = ad.cosine_matrix(hv, ht)
    if mode == LITERAL:
        eye = np.eye(b)
        p = ad.clamp(cos, CONTRASTIVE_EPS, 1.0 - CONTRASTIVE_EPS)
        match = ad.mul(ad.log(p), ad.tensor(eye))
        non_match = ad.mul(ad.log(ad.sub(ad.tensor(np.ones((b, b))), p)), ad.tensor(1.0 - eye))
        return ad.scale(ad.add(ad.total_sum(match), ad.total_sum(non_match)), -1.0 / (b * b))
    if mode == INFONCE:
        logits = ad.scale(cos, 1.0 / INFONCE_TEMPERATURE)
        labels = np.arange(b)
        rows = ad.softmax_cross_entropy(logits, labels)
        cols = ad.softmax_cross_entropy(ad.transpose(logits), labels)
        return ad.scale(ad.add(rows, cols), 0.5)
    raise ConfigError(f"unknown contrastive mode {mode!r}")


def loss_contrastive(model: GwModel, xv: Tensor, yt: Tensor, mode: str = LITERAL) -> Tensor:
    """Cross-side alignment of workspace encodings over a paired batch.

    ``literal`` treats each clamped pairwise cosine as the probability that
    the pair matches and scores it with binary cross-entropy, normalized by
    B^2; ``infonce`` is the symmetric softmax cross-entropy over the cosine
    matrix at temperature 0.07. Only the encoders receive gradients.
    """
    _require_rows(xv, 2, "contrastive")
    return _contrastive_from(model.encode("v", xv), model.encode("t", yt), mode)


def _encoded_sides(model: GwModel, uv: Tensor | None, ut: Tensor | None) -> list:
    sides = []
    for side, batch in (("v", uv), ("t", ut)):
        if batch is not None and batch.value.shape[0] > 0:
            sides.append((side, batch, model.encode(side, batch)))
    return sides


def _average_terms(terms: list[Tensor]) -> Tensor:
    if not terms:
        raise ad.GraphError("cycle losses need at least one non-empty unpaired batch")
    total = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
    return ad.scale(total, 0.5)


def _cycle_from(model: GwModel, encoded: list) -> Tensor:
    terms = []
    for side, batch, h in encoded:
        other = "t" if side == "v" else "v"
        back = model.decode(side, model.encode(other, model.decode(other, h)))
        terms.append(ad.mean_squared_error(back, batch))
    return _average_terms(terms)


def _demicycle_from(model: GwModel, encoded: list) -> Tensor:
    terms = [ad.mean_squared_error(model.decode(side, h), batch) for side, batch, h in encoded]
    return _average_terms(terms)


def loss_cycle(model: GwModel, uv: Tensor | None, ut: Tensor | None) -> Tensor:
    """Translate each unpaired batch to the other side and back; MSE to the start."""
    return _cycle_from(model, _encoded_sides(model, uv, ut))


def loss_demicycle(model: GwModel, uv: Tensor | None, ut: Tensor | None) -> Tensor:
    """Encode-decode within each side; MSE to the input, sides averaged."""
    return _demicycle_from(model, _encoded_sides(model, uv, ut))


def total_loss(model: GwModel, weights: LossWeights, xv: Tensor, yt: Tensor,
               uv: Tensor | None, ut: Tensor | None, mode: str = LITERAL,
               report_inactive: bool = True) -> tuple[Tensor, dict]:
    """Weighted combination of the four objectives, plus the raw term values.

    Zero-weighted terms never enter the gradient graph of the returned total;
    with ``report_inactive`` they are still evaluated for the breakdown.
    """
    if not isinstance(weights, LossWeights):
        weights = LossWeights(*weights)
    hv = model.encode("v", xv) if xv is not None else None
    ht = model.encode("t", yt) if yt is not None else None
    unpaired = None

    def encoded():
        nonlocal unpaired
        if unpaired is None:
            unpaired = _encoded_sides(model, uv, ut)
        return unpaired

    def term(weight, build):
        if weight > 0.0 or report_inactive:
            return build()
        return None

    terms = {
        "translation": term(weights.translation, lambda: _translation_terms(model, hv, ht, xv, yt)),
        "contrastive": term(weights.contrastive, lambda: _contrastive_from(hv, ht, mode)),
        "cycle": term(weights.cycle, lambda: _cycle_from(model, encoded())),
        "demicycle": term(weights.demicycle, lambda: _demicycle_from(model, encoded())),
    }
    total = None
    for name, t in terms.items():
        w = getattr(weights, name)
        if w > 0.0:
            piece = ad.scale(t, w)
            total = piece if total is None else ad.add(total, piece)
    if total is None:
        raise ConfigError("at least one loss weight must be positive")
    breakdown = {name: (t.item() if t is not None else float("nan")) for name, t in terms.items()}
    breakdown["total"] = total.item()
    return total, breakdown


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"GWCK"


def save_checkpoint(path: Path, model: GwModel, header: dict) -> None:
    """Byte-stable checkpoint: JSON header + raw little-endian float64 block."""
    meta = dict(header)
    meta["sides"] = {s: {"name": model.specs[s].name, "latent_dim": model.specs[s].latent_dim,
                         "loss_kind": model.specs[s].loss_kind} for s in ("v", "t")}
    meta["init_seed"] = model.init_seed
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in model.params():
            f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path: Path) -> tuple[dict, GwModel]:
    data = Path(path).read_bytes()
    if data[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path} is not a model checkpoint")
    (blob_len,) = struct.unpack_from("<I", data, 4)
    meta = json.loads(data[8:8 + blob_len].decode())
    specs = {s: DomainSpec(**meta["sides"][s]) for s in ("v", "t")}
    model = make_gw_model(specs["v"], specs["t"], meta.get("init_seed") or 0)
    pos = 8 + blob_len
    for p in model.params():
        n = p.value.size * 8
        p.value[...] = np.frombuffer(data[pos:pos + n], dtype="<f8").reshape(p.value.shape)
        pos += n
    if pos != len(data):
        raise ValueError(f"checkpoint {path} has {len(data) - pos} trailing bytes")
    return meta, model
