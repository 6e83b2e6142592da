"""Semi-supervised splits, batch construction and the training loop.

A split takes a seeded permutation of the K training records: the first N
indices form the matched set S (both modalities supervised together) and the
first N+M form the single-modality pools U_v = U_t (pairing is ignored when
an index is drawn unpaired). Nesting follows for free: at a fixed seed,
growing M only extends the pools.

Each batch slot independently comes from the matched pool with probability
0.5, otherwise from one modality's unpaired pool (modality uniform), indices
uniform with replacement. The random stream consumes the same number of
draws per slot regardless of pool sizes, so runs that ignore unpaired data
follow identical parameter trajectories across M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import workspace as gw
from .optim import Adam
from .shapes.dataset import Dataset
from .specialists import SpecialistSet, domain_loss
from .workspace import ConfigError, GwModel, LossWeights

EVAL_CONTRASTIVE_BATCH = 64


@dataclass(frozen=True)
class DatasetSplit:
    k: int
    n: int
    m: int
    pairs: np.ndarray  # S: indices with cross-modal supervision
    pool_v: np.ndarray  # U_v: indices usable as unpaired vision samples
    pool_t: np.ndarray  # U_t: same for the language side

    def __post_init__(self):
        assert set(self.pairs) <= set(self.pool_v) and set(self.pairs) <= set(self.pool_t)


def split_dataset(k: int, n: int, m: int | str, seed: int) -> DatasetSplit:
    if m == "all":
        m = k - n
    if not (0 <= n and n + m <= k):
        raise ConfigError(f"need N <= N+M <= K, got N={n}, M={m}, K={k}")
    perm = np.random.default_rng(np.random.SeedSequence((seed, 5))).permutation(k)
    pool = perm[: n + m].copy()
    return DatasetSplit(k, n, int(m), perm[:n].copy(), pool, pool.copy())


def make_batch(split: DatasetSplit, batch_size: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(paired, unpaired-vision, unpaired-language) record indices for one step."""
    if batch_size < 4:
        raise ConfigError(f"batch size must be >= 4, got {batch_size}")
    paired_slots = rng.random(batch_size) < 0.5
    n_paired = int(paired_slots.sum())
    paired = rng.integers(0, len(split.pairs), n_paired) if len(split.pairs) else np.zeros(0, int)
    modality = rng.integers(0, 2, batch_size - n_paired)
    n_v = int((modality == 0).sum())
    uv = rng.integers(0, len(split.pool_v), n_v)
    ut = rng.integers(0, len(split.pool_t), batch_size - n_paired - n_v)
    return split.pairs[paired], split.pool_v[uv], split.pool_t[ut]


@dataclass(frozen=True)
class TrainConfig:
    variant: str = gw.ALL_SUP_ALL_CYCLES
    pairing: str = "proto"  # language side: "proto" or "text"
    n: int = 1000
    m: int | str = "all"
    batch_size: int = 64
    steps: int = 8000
    learning_rate: float = 1e-3
    seed_split: int = 0
    seed_init: int = 0
    seed_batch: int = 0
    contrastive_mode: str = gw.LITERAL
    eval_every: int = 1000
    eval_cap: int = 1000  # max items per evaluation probe
    weights: LossWeights | None = None

    def resolved_weights(self) -> LossWeights:
        w = self.weights if self.weights is not None else gw.default_weights(self.variant)
        w.validate_for(self.variant)
        return w

    def seeds(self) -> dict:
        return {"split": self.seed_split, "init": self.seed_init, "batch": self.seed_batch}

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed_split=seed, seed_init=seed, seed_batch=seed)


class PreparedData:
    """Frozen-specialist latents for every record of one dataset."""

    def __init__(self, dataset: Dataset, specialists: SpecialistSet, pairing: str):
        if pairing not in ("proto", "text"):
            raise ConfigError(f"pairing must be 'proto' or 'text', got {pairing!r}")
        self.pairing = pairing
        self.specialists = specialists
        self.v_spec = specialists.spec("vision")
        self.t_spec = specialists.spec(pairing)
        tr, te = dataset.train, dataset.test
        self.train_v = specialists.embed("vision", tr.protos, tr.captions)
        self.train_t = specialists.embed(pairing, tr.protos, tr.captions)
        self.test_v = specialists.embed("vision", te.protos, te.captions)
        self.test_t = specialists.embed(pairing, te.protos, te.captions)

    @property
    def k(self) -> int:
        return len(self.train_v)


class TrainingAborted(RuntimeError):
    def __init__(self, step: int, breakdown: dict):
        super().__init__(f"non-finite loss at step {step}: {breakdown}")
        self.step = step
        self.breakdown = breakdown


@dataclass
class TrainResult:
    model: GwModel
    metrics: list = field(default_factory=list)  # rows of metrics.csv
    final_test: dict = field(default_factory=dict)
    final_train: dict = field(default_factory=dict)


METRIC_COLUMNS = ("step", "split", "loss_tr", "loss_cont", "loss_cy", "loss_dcy", "loss_total")


def evaluate_losses(model: GwModel, xv: np.ndarray, yt: np.ndarray,
                    uv: np.ndarray | None = None, ut: np.ndarray | None = None) -> dict:
    """All objective values on fixed arrays, gradients never applied.

    Translation directions are reported separately and averaged; the
    contrastive loss is computed in both modes over successive chunks of 64
    pairs (the remainder is dropped if smaller than 2).
    """
    uv = xv if uv is None else uv
    ut = yt if ut is None else ut
    txv, tyt = ad.tensor(xv), ad.tensor(yt)
    to_t = domain_loss(model.specs["t"], model.translate("v", "t", txv), tyt).item()
    to_v = domain_loss(model.specs["v"], model.translate("t", "v", tyt), txv).item()
    cont = {}
    for mode in (gw.LITERAL, gw.INFONCE):
        vals = []
        for lo in range(0, len(xv) - 1, EVAL_CONTRASTIVE_BATCH):
            cv = xv[lo:lo + EVAL_CONTRASTIVE_BATCH]
            ct = yt[lo:lo + EVAL_CONTRASTIVE_BATCH]
            if len(cv) < 2:
                break
            vals.append(gw.loss_contrastive(model, ad.tensor(cv), ad.tensor(ct), mode).item())
        cont[mode] = float(np.mean(vals))
    return {
        "translation_to_t": to_t,
        "translation_to_v": to_v,
        "translation": 0.5 * (to_t + to_v),
        "contrastive_literal": cont[gw.LITERAL],
        "contrastive_infonce": cont[gw.INFONCE],
        "cycle": gw.loss_cycle(model, ad.tensor(uv), ad.tensor(ut)).item(),
        "demicycle": gw.loss_demicycle(model, ad.tensor(uv), ad.tensor(ut)).item(),
    }


def _metric_row(step: int, split: str, losses: dict, weights: LossWeights, mode: str) -> dict:
    cont = losses["contrastive_literal" if mode == gw.LITERAL else "contrastive_infonce"]
    total = (weights.translation * losses["translation"] + weights.contrastive * cont
             + weights.cycle * losses["cycle"] + weights.demicycle * losses["demicycle"])
    return {"step": step, "split": split, "loss_tr": losses["translation"], "loss_cont": cont,
            "loss_cy": losses["cycle"], "loss_dcy": losses["demicycle"], "loss_total": total}


def train(config: TrainConfig, data: PreparedData,
          split: DatasetSplit | None = None) -> TrainResult:
    """Adam over the variant's weighted objective; deterministic in its seeds."""
    weights = config.resolved_weights()
    split = split or split_dataset(data.k, config.n,
                                   config.m, config.seed_split)
    if len(split.pairs) == 0 and (weights.translation > 0 or weights.contrastive > 0):
        raise ConfigError(f"variant {config.variant} needs matched pairs, but N=0")

    model = gw.make_gw_model(data.v_spec, data.t_spec, config.seed_init)
    before = data.specialists.snapshot_hash()
    opt = Adam(model.params(), learning_rate=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence((config.seed_batch, 6)))

    probe_pairs = split.pairs[: config.eval_cap]
    probe_v = split.pool_v[: config.eval_cap]
    probe_t = split.pool_t[: config.eval_cap]
    result = TrainResult(model)

    def log(step):
        train_losses = evaluate_losses(model, data.train_v[probe_pairs], data.train_t[probe_pairs],
                                       data.train_v[probe_v], data.train_t[probe_t])
        test_losses = evaluate_losses(model, data.test_v, data.test_t)
        result.metrics.append(_metric_row(step, "train", train_losses, weights, config.contrastive_mode))
        result.metrics.append(_metric_row(step, "test", test_losses, weights, config.contrastive_mode))
        result.final_train, result.final_test = train_losses, test_losses

    for step in range(config.steps):
        paired, uv, ut = make_batch(split, config.batch_size, rng)
        try:
            total, breakdown = gw.total_loss(
                model, weights,
                ad.tensor(data.train_v[paired]), ad.tensor(data.train_t[paired]),
                ad.tensor(data.train_v[uv]), ad.tensor(data.train_t[ut]),
                mode=config.contrastive_mode, report_inactive=False)
            opt.zero_grad()
            ad.backward(total)
            opt.step()
        except ad.NumericFailure as exc:
            raise TrainingAborted(step, {"error": str(exc)}) from exc
        if not math.isfinite(total.item()):
            raise TrainingAborted(step, breakdown)
        if (step + 1) % config.eval_every == 0 or step + 1 == config.steps:
            log(step + 1)

    if data.specialists.snapshot_hash() != before:
        raise RuntimeError("frozen specialist parameters changed during training")
    return result


def calibrate_score_weights(translation_final: float, contrastive_final: float) -> tuple[float, float]:
    """Scalarization weights making the two baseline finals contribute equally.

    Solves w_tr * translation = w_cont * contrastive with w_tr + w_cont = 1;
    a zero final falls back to equal weights.
    """
    if translation_final <= 0.0 or contrastive_final <= 0.0:
        return (0.5, 0.5)
    w_tr = contrastive_final / (translation_final + contrastive_final)
    return (w_tr, 1.0 - w_tr)


def _active_grid_terms(variant: str) -> list[str]:
    return {
        gw.TRANSLATION_ONLY: [],
        gw.TRANS_CONT: ["contrastive"],
        gw.TRANS_FULL_CYCLES: ["cycle"],
        gw.TRANS_DEMI_CYCLES: ["demicycle"],
        gw.ALL_SUP_ALL_CYCLES: ["contrastive", "cycle", "demicycle"],
    }[variant]


def select_coefficients(config: TrainConfig, data: PreparedData,
                        grid: tuple[float, ...] = (0.1, 1.0, 10.0),
                        score_weights: tuple[float, float] = (0.5, 0.5)) -> tuple[LossWeights, list]:
    """Train one model per grid point (translation weight pinned at 1) and
    return the weights minimizing the calibrated test score; ties break to the
    lexicographically smaller coefficient vector."""
    terms = _active_grid_terms(config.variant)
    combos = [()]
    for _ in terms:
        combos = [c + (g,) for c in combos for g in grid]
    if not combos:
        raise ConfigError("empty coefficient grid")
    w_tr, w_cont = score_weights
    results = []
    for combo in combos:
        weights = LossWeights(1.0, **dict(zip(terms, combo)))
        run = train(replace(config, weights=weights), data)
        mode_key = ("contrastive_literal" if config.contrastive_mode == gw.LITERAL
                    else "contrastive_infonce")
        score = w_tr * run.final_test["translation"] + w_cont * run.final_test[mode_key]
        results.append({"coefficients": combo, "weights": weights, "score": score,
                        "final_test": run.final_test})
    best = min(results, key=lambda r: (r["score"], r["coefficients"]))
    return best["weights"], results
