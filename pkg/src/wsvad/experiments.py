"""Multi-seed runs over the ablation axes (components, cross-batch strategy, tap layer)."""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, replace

from wsvad.data import VideoSample
from wsvad.evaluation import evaluate
from wsvad.training import TrainConfig, fit, prepare_training_set

log = logging.getLogger(__name__)

# Component rows: backbone, +cluster loss, +cross-batch memory, +score guidance.
COMPONENT_CONFIGS = {
    "backbone": dict(strategy="none", enable_bc=False, enable_bcg=False),
    "+bc_loss": dict(strategy="none", enable_bc=True, enable_bcg=False),
    "+cbl": dict(strategy="way1", enable_bc=True, enable_bcg=False),
    "+bcg": dict(strategy="way1", enable_bc=True, enable_bcg=True),
}
STRATEGY_CONFIGS = {
    f"strategy:{s}": dict(strategy=s, enable_bc=True, enable_bcg=False)
    for s in ("none", "way1", "way2", "way3", "way4")
}
TAP_CONFIGS = {
    f"tap:{t}": dict(strategy="none", enable_bc=True, enable_bcg=False, tap=t)
    for t in ("fc", "gcn1", "gcn2")
}
ALL_CONFIGS = {**COMPONENT_CONFIGS, **STRATEGY_CONFIGS, **TAP_CONFIGS}
DEFAULT_ABLATION = [*COMPONENT_CONFIGS, *STRATEGY_CONFIGS]


@dataclass
class ConfigSummary:
    name: str
    aucs: list[float]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.aucs)

    @property
    def stdev(self) -> float:
        return statistics.stdev(self.aucs) if len(self.aucs) > 1 else 0.0


def run_once(
    train: list[VideoSample], test: list[VideoSample], config: TrainConfig, data_cache: dict | None = None
) -> float:
    key = (config.segments, config.sim_threshold)
    data = data_cache.get(key) if data_cache is not None else None
    if data is None:
        data = prepare_training_set(train, config.segments, config.sim_threshold)
        if data_cache is not None:
            data_cache[key] = data
    state, _ = fit(data, config)
    return evaluate(state.params, test, rectify=config.enable_bcg, alpha=config.hp.alpha,
                    tap=config.tap, seed=config.seed, sim_threshold=config.sim_threshold).auc


def _key(cfg: TrainConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)


def ablate(
    train: list[VideoSample],
    test: list[VideoSample],
    base: TrainConfig,
    names: list[str] = DEFAULT_ABLATION,
    seeds: list[int] = (0, 1, 2, 3, 4),
) -> list[ConfigSummary]:
    """Test AUC of each named configuration for every seed.

    Configurations that resolve to identical training settings run once and
    share their results.
    """
    cache: dict[str, float] = {}
    data_cache: dict = {}
    out = []
    for name in names:
        if name not in ALL_CONFIGS:
            raise ValueError(f"unknown configuration {name!r}; known: {sorted(ALL_CONFIGS)}")
        aucs = []
        for seed in seeds:
            cfg = replace(base, seed=seed, **ALL_CONFIGS[name])
            k = _key(cfg)
            if k not in cache:
                cache[k] = run_once(train, test, cfg, data_cache)
                log.info("%s seed %d auc %.4f", name, seed, cache[k])
            aucs.append(cache[k])
        out.append(ConfigSummary(name, aucs))
    return out


def format_summary(rows: list[ConfigSummary]) -> str:
    width = max(len(r.name) for r in rows)
    lines = [f"{'config':<{width}}  mean_auc  stdev   per_seed"]
    for r in rows:
        per = " ".join(f"{a:.4f}" for a in r.aucs)
        lines.append(f"{r.name:<{width}}  {r.mean:.4f}    {r.stdev:.4f}  {per}")
    return "\n".join(lines)
