"""Grid runners (ablation matrix, unpaired-data sweep), result persistence
and figure-data aggregation.

Every output directory carries exactly one ``manifest.json`` naming the
command, the hashed configuration, the asset and specialist hashes, and the
files produced, so any artifact on disk can be traced to the run that made
it and reproduced byte-for-byte from seeds.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import multiprocessing
import os
from pathlib import Path

import numpy as np

from . import __version__
from . import workspace as gw
from .evaluation import build_ooo_dataset, eval_properties, run_ooo_evaluation
from .shapes.dataset import Dataset, asset_hashes, load_dataset, load_manifest
from .specialists import SpecialistSet
from .training import (
    DatasetSplit,
    METRIC_COLUMNS,
    PreparedData,
    TrainConfig,
    split_dataset,
    train,
)
from .workspace import ConfigError


def fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def write_csv(path: Path, columns: tuple, rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    lines += [",".join(fmt(row[c]) for c in columns) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path) -> list[dict]:
    lines = Path(path).read_text().strip().split("\n")
    columns = lines[0].split(",")
    return [dict(zip(columns, line.split(","))) for line in lines[1:]]


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":"),
                                     default=str).encode()).hexdigest()


def write_run_manifest(out_dir: Path, command: str, config: dict, seeds: dict,
                       outputs: list[str], specialist_hash: str | None = None) -> dict:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "asset_hashes": asset_hashes(),
        "specialist_hash": specialist_hash,
        "seeds": seeds,
        "outputs": sorted(outputs),
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# Context: dataset + specialists + prepared latents, cached per process
# ---------------------------------------------------------------------------


class Context:
    def __init__(self, dataset: Dataset, specialists: SpecialistSet, pairing: str):
        self.dataset = dataset
        self.specialists = specialists
        self.data = PreparedData(dataset, specialists, pairing)


_CONTEXT_CACHE: dict = {}


def load_context(dataset_dir: str, specialists_seed: int, pairing: str) -> Context:
    key = (str(dataset_dir), specialists_seed, pairing)
    if key not in _CONTEXT_CACHE:
        dataset = load_dataset(Path(dataset_dir))
        specialists = SpecialistSet(specialists_seed, dataset.config)
        _CONTEXT_CACHE[key] = Context(dataset, specialists, pairing)
    return _CONTEXT_CACHE[key]


# ---------------------------------------------------------------------------
# Single grid cell
# ---------------------------------------------------------------------------

ABLATION_COLUMNS = ("variant", "n", "m", "seed", "loss_tr", "loss_cont", "loss_cy",
                    "loss_dcy", "loss_cont_infonce", "ooo_vvv", "ooo_ttt", "ooo_ttv")
SWEEP_COLUMNS = ("variant", "n", "m", "seed", "loss_tr", "loss_cont", "loss_cy",
                 "loss_dcy", "loss_cont_infonce")


def split_file_payload(split: DatasetSplit) -> str:
    return json.dumps({"k": split.k, "n": split.n, "m": split.m,
                       "pairs": split.pairs.tolist(), "pool": split.pool_v.tolist()},
                      separators=(",", ":")) + "\n"


def run_cell(ctx: Context, config: TrainConfig, out_dir: Path,
             ooo_triplets: tuple[list, list] | None = None,
             ooo_seed: int = 0, probe_steps: int | None = None) -> dict:
    """Train one (variant, N, M, seed) cell, persist its artifacts, return a row.

    The split file is keyed by (N, M, seed) only, so equal-seed cells across
    variants share byte-identical splits.
    """
    out_dir = Path(out_dir)
    split = split_dataset(ctx.data.k, config.n, config.m, config.seed_split)
    split_path = out_dir / "splits" / f"n{config.n}_m{split.m}_s{config.seed_split}.json"
    split_path.parent.mkdir(parents=True, exist_ok=True)
    payload = split_file_payload(split)
    if split_path.exists():
        if split_path.read_text() != payload:
            raise ConfigError(f"split file {split_path} does not match its configuration")
    else:
        split_path.write_text(payload)

    result = train(config, ctx.data, split)
    report = eval_properties(result.model, ctx.data, metadata={
        "variant": config.variant, "n": config.n, "m": split.m, "seeds": config.seeds(),
        "pairing": config.pairing})

    tag = f"{config.variant}/{config.n}/{config.seed_split}"
    metrics_path = out_dir / "metrics" / f"{tag}.csv"
    write_csv(metrics_path, METRIC_COLUMNS, result.metrics)
    ckpt_path = out_dir / "ckpt" / f"{tag}.bin"
    weights = config.resolved_weights()
    gw.save_checkpoint(ckpt_path, result.model, {
        "variant": config.variant, "n": config.n, "m": split.m, "seeds": config.seeds(),
        "alphas": dataclasses.astuple(weights), "pairing": config.pairing,
        "specialist_hash": ctx.specialists.snapshot_hash()})

    row = {
        "variant": config.variant, "n": config.n, "m": split.m, "seed": config.seed_split,
        "loss_tr": report.translation, "loss_cont": report.contrastive_literal,
        "loss_cy": report.cycle, "loss_dcy": report.demicycle,
        "loss_cont_infonce": report.contrastive_infonce,
        "ooo_vvv": "", "ooo_ttt": "", "ooo_ttv": "",
    }
    if ooo_triplets is not None:
        accs = run_ooo_evaluation(result.model, ctx.data, ooo_triplets[0], ooo_triplets[1],
                                  seed=ooo_seed, steps=probe_steps or 5000)
        row.update({"ooo_vvv": accs["vvv"], "ooo_ttt": accs["ttt"], "ooo_ttv": accs["ttv"]})
    return row


# ---------------------------------------------------------------------------
# Parallel execution
# ---------------------------------------------------------------------------

_WORKER: dict = {}


def _worker_init(dataset_dir, specialists_seed, pairing, out_dir, ooo_spec):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    ctx = load_context(dataset_dir, specialists_seed, pairing)
    triplets = None
    if ooo_spec is not None:
        triplets = build_ooo_dataset(ctx.dataset.train.protos, ooo_spec["n_train"],
                                     ooo_spec["n_test"], ooo_spec.get("far_pool"),
                                     ooo_spec.get("seed", 0))
    _WORKER.update(ctx=ctx, out_dir=out_dir, ooo=triplets, ooo_spec=ooo_spec or {})


def _worker_run(config: TrainConfig) -> dict:
    return run_cell(_WORKER["ctx"], config, _WORKER["out_dir"], _WORKER["ooo"],
                    ooo_seed=_WORKER["ooo_spec"].get("seed", 0),
                    probe_steps=_WORKER["ooo_spec"].get("probe_steps"))


def run_grid(configs: list[TrainConfig], dataset_dir: str, specialists_seed: int,
             pairing: str, out_dir: Path, jobs: int = 1, ooo_spec: dict | None = None,
             log=print) -> list[dict]:
    """Run independent cells, optionally across processes; rows in config order."""
    init_args = (dataset_dir, specialists_seed, pairing, Path(out_dir), ooo_spec)
    if jobs <= 1:
        _worker_init(*init_args)
        rows = []
        for i, cfg in enumerate(configs):
            rows.append(_worker_run(cfg))
            log(f"[{i + 1}/{len(configs)}] {cfg.variant} n={cfg.n} m={cfg.m} seed={cfg.seed_split}")
        return rows
    with multiprocessing.get_context("spawn").Pool(jobs, initializer=_worker_init,
                                                   initargs=init_args) as pool:
        rows = []
        for i, row in enumerate(pool.imap(_worker_run, configs)):
            rows.append(row)
            log(f"[{i + 1}/{len(configs)}] {row['variant']} n={row['n']} m={row['m']} seed={row['seed']}")
    return rows


# ---------------------------------------------------------------------------
# The two study grids
# ---------------------------------------------------------------------------


def ablation_configs(base: TrainConfig, variants: list[str], n_list: list[int],
                     seeds: list[int]) -> list[TrainConfig]:
    return [dataclasses.replace(base.with_seed(seed), variant=variant, n=n, m="all")
            for variant in variants for n in n_list for seed in seeds]


def run_ablation_matrix(dataset_dir: str, specialists_seed: int, base: TrainConfig,
                        variants: list[str], n_list: list[int], seeds: list[int],
                        out_dir: Path, jobs: int = 1, ooo_spec: dict | None = None,
                        log=print) -> list[dict]:
    configs = ablation_configs(base, variants, n_list, seeds)
    rows = run_grid(configs, dataset_dir, specialists_seed, base.pairing, out_dir,
                    jobs=jobs, ooo_spec=ooo_spec, log=log)
    write_csv(Path(out_dir) / "ablation.csv", ABLATION_COLUMNS, rows)
    return rows


def sweep_configs(base: TrainConfig, variants: list[str], n_fixed: int,
                  m_list: list[int], seeds: list[int]) -> list[TrainConfig]:
    return [dataclasses.replace(base.with_seed(seed), variant=variant, n=n_fixed, m=m)
            for variant in variants for m in m_list for seed in seeds]


def run_unpaired_sweep(dataset_dir: str, specialists_seed: int, base: TrainConfig,
                       variants: list[str], n_fixed: int, m_list: list[int],
                       seeds: list[int], out_dir: Path, jobs: int = 1,
                       log=print) -> list[dict]:
    """Vary the strictly-unpaired count M at fixed N; nesting holds because
    equal split seeds share one permutation."""
    configs = sweep_configs(base, variants, n_fixed, m_list, seeds)
    rows = run_grid(configs, dataset_dir, specialists_seed, base.pairing, out_dir,
                    jobs=jobs, log=log)
    rows = [{c: r[c] for c in SWEEP_COLUMNS} for r in rows]
    write_csv(Path(out_dir) / "sweep.csv", SWEEP_COLUMNS, rows)
    return rows


# ---------------------------------------------------------------------------
# Figure-data aggregation
# ---------------------------------------------------------------------------

_FIG_METRICS = ("loss_tr", "loss_cont", "loss_cont_infonce", "loss_cy", "loss_dcy",
                "ooo_vvv", "ooo_ttt", "ooo_ttv")


def aggregate_figure_rows(rows: list[dict], x_key: str, metric: str) -> list[dict]:
    """One series per variant: seed-wise median/min/max of a metric along x."""
    grouped: dict = {}
    for r in rows:
        if r.get(metric, "") == "":
            continue
        grouped.setdefault((r["variant"], int(r[x_key])), []).append(float(r[metric]))
    out = []
    for (variant, x), vals in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        out.append({x_key: x, "variant": variant, "median": float(np.median(vals)),
                    "min": float(np.min(vals)), "max": float(np.max(vals)),
                    "seeds": len(vals)})
    return out


def write_report(out_dir: Path, report_dir: Path) -> list[str]:
    """Aggregate ablation/sweep CSVs into per-figure plot-data files."""
    out_dir, report_dir = Path(out_dir), Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for source, x_key in (("ablation.csv", "n"), ("sweep.csv", "m")):
        path = out_dir / source
        if not path.exists():
            continue
        rows = read_csv(path)
        for metric in _FIG_METRICS:
            fig_rows = aggregate_figure_rows(rows, x_key, metric)
            if not fig_rows:
                continue
            name = f"fig_{metric}_vs_{x_key}.csv"
            write_csv(report_dir / name, (x_key, "variant", "median", "min", "max", "seeds"),
                      fig_rows)
            written.append(name)
    if not written:
        raise ConfigError(f"no ablation.csv or sweep.csv found under {out_dir}")
    return written
