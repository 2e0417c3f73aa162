"""Reproducible experiment runs: configuration, seeded dataset generation
with CSV caching, training, evaluation, and a run manifest with artifact
hashes.

Artifacts written to the output directory:

    ground_truth_train.csv / ground_truth_test.csv
        header: intervention_id,country,q_c,Q_W
    report.json          evaluation report plus thresholds and diagnostics
    table1_row.csv       header: mechanism,model_mae,baseline_mae,improvement
    per_country.csv      vcg: country,citizens,mae_delta,mae_alpha,mae_q,baseline_mae_q
                         others: country,citizens,mae_q,baseline_mae_q
    training_curve.csv   header: epoch,mean_loss
    manifest.json        command, resolved config, seeds, artifact hashes, duration
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from mechscm.surrogate import (
    MECHANISMS,
    GroundTruthSet,
    TrainConfig,
    evaluate,
    make_dataset,
    median_fixed_point_residual_max,
    train,
)
from mechscm.voting import (
    Intervention,
    ParameterRanges,
    Population,
    generate_population,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "ExperimentResult",
    "THRESHOLDS",
]


class ConfigError(ValueError):
    pass


THRESHOLDS = {
    "vcg": {"improvement_min": 0.90, "model_mae_max": 0.15, "mae_delta_max": 1e-6},
    "median": {"improvement_min": 0.80, "median_residual_max": 1e-5},
    "dictator": {"improvement_max": 0.20},
}


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: str = "vcg"
    seed: int = 0
    n_countries: int = 5
    total_citizens: int = 1000
    a_range: tuple = (0.35, 0.65)
    b_range: tuple = (7.0, 13.0)
    d_range: tuple = (0.05, 0.15)
    size_sigma: float = 0.5
    damping: float = 0.3
    tol: float = 1e-6
    max_iter: int = 10_000
    n_train: int = 1000
    n_test: int = 500
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"mechanism must be one of {MECHANISMS}")

    def ranges(self) -> ParameterRanges:
        return ParameterRanges(
            a=self.a_range, b=self.b_range, d=self.d_range, size_sigma=self.size_sigma
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            n_train=self.n_train,
            n_test=self.n_test,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("a_range", "b_range", "d_range"):
            out[key] = list(out[key])
        return out


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    raw.update(overrides or {})
    for key in ("a_range", "b_range", "d_range"):
        if key in raw:
            raw[key] = tuple(raw[key])
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**raw)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: dict
    thresholds_ok: bool
    out_dir: Path
    artifacts: dict
    duration: float


def _write_ground_truth_csv(path: Path, data: GroundTruthSet) -> None:
    lines = ["intervention_id,country,q_c,Q_W"]
    for j, _iv in enumerate(data.interventions):
        total = float(data.q[j].sum())
        for c in range(data.q.shape[1]):
            lines.append(f"{j},{c},{data.q[j, c]!r},{total!r}")
    path.write_text("\n".join(lines) + "\n")


def _write_table1_row(path: Path, report: dict) -> None:
    lines = [
        "mechanism,model_mae,baseline_mae,improvement",
        f"{report['mechanism']},{report['model_mae']!r},{report['baseline_mae']!r},{report['improvement']!r}",
    ]
    path.write_text("\n".join(lines) + "\n")


def _write_per_country(path: Path, report: dict, pop: Population) -> None:
    if report["mechanism"] == "vcg":
        lines = ["country,citizens,mae_delta,mae_alpha,mae_q,baseline_mae_q"]
        for c in range(pop.n_countries):
            lines.append(
                f"{c},{pop.sizes[c]},{report['mae_delta'][c]!r},{report['mae_alpha'][c]!r},"
                f"{report['per_country_mae'][c]!r},{report['per_country_baseline_mae'][c]!r}"
            )
    else:
        lines = ["country,citizens,mae_q,baseline_mae_q"]
        for c in range(pop.n_countries):
            lines.append(
                f"{c},{pop.sizes[c]},{report['per_country_mae'][c]!r},"
                f"{report['per_country_baseline_mae'][c]!r}"
            )
    path.write_text("\n".join(lines) + "\n")


def _write_training_curve(path: Path, curve: np.ndarray) -> None:
    lines = ["epoch,mean_loss"]
    for i, value in enumerate(curve):
        lines.append(f"{i},{float(value)!r}")
    path.write_text("\n".join(lines) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write_json(path: Path, doc: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _check_thresholds(report: dict) -> bool:
    t = THRESHOLDS[report["mechanism"]]
    if "improvement_min" in t and report["improvement"] < t["improvement_min"]:
        return False
    if "improvement_max" in t and report["improvement"] > t["improvement_max"]:
        return False
    if "model_mae_max" in t and report["model_mae"] > t["model_mae_max"]:
        return False
    if "mae_delta_max" in t and max(report["mae_delta"]) > t["mae_delta_max"]:
        return False
    if "median_residual_max" in t and report["median_residual"] > t["median_residual_max"]:
        return False
    return True


def run_experiment(
    cfg: ExperimentConfig, out_dir, threads: int = 1, command: str = "experiment run"
) -> ExperimentResult:
    """Generate the population and datasets, fit the surrogate, evaluate, and
    emit all artifacts plus the manifest.  Fully deterministic given the
    config; threads only parallelize independent ground-truth solves."""
    start = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ss = np.random.SeedSequence(cfg.seed)
    pop_seed, test_seed, eval_seed = ss.spawn(3)
    pop = generate_population(
        pop_seed,
        n_countries=cfg.n_countries,
        total_citizens=cfg.total_citizens,
        ranges=cfg.ranges(),
    )

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        result = train(
            pop,
            cfg.mechanism,
            cfg.train_config(),
            damping=cfg.damping,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            executor=executor,
        )
        test_set = make_dataset(
            cfg.mechanism,
            pop,
            cfg.n_test,
            test_seed,
            damping=cfg.damping,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            executor=executor,
        )
    finally:
        if executor is not None:
            executor.shutdown()

    eval_children = eval_seed.spawn(2)
    report_obj = evaluate(
        result.net,
        result.delta,
        pop,
        cfg.mechanism,
        test_set,
        baseline_seed=eval_children[0],
        floor_seed=eval_children[1],
    )
    report = report_obj.to_dict()
    report["delta_hat"] = [float(x) for x in result.delta.delta_hat]
    report["delta_method"] = result.delta.method
    report["final_train_loss"] = float(result.curve[-1])
    report["first_train_loss"] = float(result.curve[0])
    if cfg.mechanism == "median":
        report["median_residual"] = median_fixed_point_residual_max(
            pop, result.train_set, test_set
        )
    report["thresholds"] = THRESHOLDS[cfg.mechanism]
    ok = _check_thresholds(report)
    report["thresholds_ok"] = ok

    paths = {
        "ground_truth_train.csv": out_dir / "ground_truth_train.csv",
        "ground_truth_test.csv": out_dir / "ground_truth_test.csv",
        "table1_row.csv": out_dir / "table1_row.csv",
        "per_country.csv": out_dir / "per_country.csv",
        "training_curve.csv": out_dir / "training_curve.csv",
        "report.json": out_dir / "report.json",
    }
    _write_ground_truth_csv(paths["ground_truth_train.csv"], result.train_set)
    _write_ground_truth_csv(paths["ground_truth_test.csv"], test_set)
    _write_table1_row(paths["table1_row.csv"], report)
    _write_per_country(paths["per_country.csv"], report, pop)
    _write_training_curve(paths["training_curve.csv"], result.curve)
    _atomic_write_json(paths["report.json"], report)

    duration = time.perf_counter() - start
    artifacts = {name: _sha256(p) for name, p in paths.items()}
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "seeds": {"root": cfg.seed},
        "artifacts": artifacts,
        "duration_seconds": duration,
        "thresholds_ok": ok,
    }
    _atomic_write_json(out_dir / "manifest.json", manifest)
    return ExperimentResult(
        config=cfg,
        report=report,
        thresholds_ok=ok,
        out_dir=out_dir,
        artifacts=artifacts,
        duration=duration,
    )
