"""Hyperparameter grids, exhaustive and TPE search, parameter importance.

Grid entries come from a YAML document of entrypoints::

    my_model:
        input_chunk_length: ["range", 48, 240, 24]
        batch_size: ["list", 256, 512, 1024]
        output_chunk_length: 24

Search runs over the discrete expansion of that grid only. TPE splits the
trial history at a loss quantile into good and bad sets, models each with
a kernel density per parameter over the candidate set, and suggests the
candidate maximizing the good/bad density ratio. The TPE policy knobs
live in :class:`TpePolicy` so they can be tuned in one place.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional, Sequence

import numpy as np
import yaml


class HpoError(ValueError):
    pass


@dataclass(frozen=True)
class HyperparameterGrid:
    name: str
    entries: dict  # param -> tuple of candidate values (singleton = fixed)

    def varying(self) -> list[str]:
        return sorted(p for p, c in self.entries.items() if len(c) > 1)

    def fixed(self) -> dict:
        return {p: c[0] for p, c in self.entries.items() if len(c) == 1}

    @property
    def size(self) -> int:
        return int(np.prod([len(c) for c in self.entries.values()])) if self.entries else 0


def _expand_entry(param: str, raw) -> tuple:
    if isinstance(raw, list):
        if not raw:
            raise HpoError(f"grid syntax error: empty list for {param}")
        tag = raw[0]
        if tag == "range":
            if len(raw) != 4:
                raise HpoError(f"grid syntax error: range needs [start, end, step] for {param}")
            start, end, step = raw[1], raw[2], raw[3]
            if step <= 0 or start > end:
                raise HpoError(f"grid syntax error: bad range for {param}")
            values = []
            v = start
            while v <= end + 1e-12:
                values.append(round(v, 12) if isinstance(v, float) else v)
                v += step
            return tuple(values)
        if tag == "list":
            if len(raw) < 2:
                raise HpoError(f"grid syntax error: empty list for {param}")
            return tuple(raw[1:])
        raise HpoError(f"grid syntax error: unknown tag {tag!r} for {param}")
    return (raw,)


def parse_grid_config(document: str | dict, entrypoint_name: str) -> HyperparameterGrid:
    doc = yaml.safe_load(document) if isinstance(document, str) else document
    if not isinstance(doc, dict) or entrypoint_name not in doc:
        raise HpoError(f"entrypoint not found: {entrypoint_name}")
    section = doc[entrypoint_name]
    if not isinstance(section, dict) or not section:
        raise HpoError(f"grid syntax error: entrypoint {entrypoint_name} is empty")
    entries = {param: _expand_entry(param, raw) for param, raw in section.items()}
    return HyperparameterGrid(entrypoint_name, entries)


GRID_SIZE_CAP = 10 ** 6


def expand_grid(grid: HyperparameterGrid) -> list[dict]:
    """Cartesian product in lexicographic order by parameter name."""
    if not grid.entries:
        raise HpoError("empty grid")
    if grid.size > GRID_SIZE_CAP:
        raise HpoError(f"grid too large: {grid.size} > {GRID_SIZE_CAP}")
    names = sorted(grid.entries)
    configs = []
    for combo in itertools.product(*(grid.entries[n] for n in names)):
        configs.append(dict(zip(names, combo)))
    return configs


@dataclass
class Trial:
    number: int
    config: dict
    loss: Optional[float] = None
    metrics: dict = field(default_factory=dict)
    datetime_start: str = ""
    datetime_complete: str = ""
    state: str = "complete"  # complete | failed | pruned


@dataclass(frozen=True)
class StudyResult:
    trials: list
    best: Trial


@dataclass(frozen=True)
class TpePolicy:
    """Standard TPE sampler defaults."""

    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


def _is_numeric(candidates: Sequence) -> bool:
    return all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in candidates)


def _density(
    candidates: Sequence, observations: list
) -> np.ndarray:
    """Smoothed density of the observations evaluated on the candidate set.

    Numeric parameters use a Gaussian kernel with Scott bandwidth over the
    discrete candidate set; categorical ones use weighted frequency with
    add-one smoothing. Densities are unnormalized but consistent across
    candidates, which is all the ratio needs.
    """
    k = len(candidates)
    n = len(observations)
    if _is_numeric(candidates):
        cand = np.asarray(candidates, dtype=float)
        obs = np.asarray(observations, dtype=float)
        sigma = float(np.std(cand)) or 1.0
        h = max(sigma * max(n, 1) ** -0.2, 1e-12)
        kernel = np.exp(-0.5 * ((cand[:, None] - obs[None, :]) / h) ** 2)
        return (kernel.sum(axis=1) + 1.0 / k) / (n + 1.0)
    counts = np.array([sum(1 for o in observations if o == c) for c in candidates], dtype=float)
    return (counts + 1.0) / (n + k)


def _suggest_tpe(
    grid: HyperparameterGrid,
    trials: list,
    rng: np.random.Generator,
    policy: TpePolicy,
) -> dict:
    complete = [t for t in trials if t.state == "complete"]
    varying = grid.varying()
    config = grid.fixed()
    if len(complete) < 2:
        for p in varying:
            config[p] = grid.entries[p][int(rng.integers(len(grid.entries[p])))]
        return config

    ordered = sorted(complete, key=lambda t: t.loss)
    n_good = max(1, math.ceil(policy.gamma * len(ordered)))
    good, bad = ordered[:n_good], ordered[n_good:] or ordered[-1:]

    ratios: dict[str, np.ndarray] = {}
    good_probs: dict[str, np.ndarray] = {}
    for p in varying:
        cands = grid.entries[p]
        dg = _density(cands, [t.config[p] for t in good])
        db = _density(cands, [t.config[p] for t in bad])
        ratios[p] = np.log(dg) - np.log(db)
        good_probs[p] = dg / dg.sum()

    seen = {tuple(sorted(t.config.items())) for t in trials}
    best_cfg, best_score = None, -math.inf
    fallback_cfg, fallback_score = None, -math.inf
    for _ in range(policy.n_candidates):
        cand_cfg = dict(config)
        score = 0.0
        for p in varying:
            cands = grid.entries[p]
            i = int(rng.choice(len(cands), p=good_probs[p]))
            cand_cfg[p] = cands[i]
            score += float(ratios[p][i])
        if score > fallback_score:
            fallback_cfg, fallback_score = cand_cfg, score
        if tuple(sorted(cand_cfg.items())) in seen:
            continue
        if score > best_score:
            best_cfg, best_score = cand_cfg, score
    return best_cfg if best_cfg is not None else fallback_cfg


def run_search(
    grid: HyperparameterGrid,
    objective: Callable[[dict], float],
    mode: str = "tpe",
    n_trials: int = 100,
    loss_function: str = "mape",
    seed: int = 0,
    policy: TpePolicy = TpePolicy(),
) -> StudyResult:
    """Sequential hyperparameter search; deterministic given (seed, grid,
    objective). The objective may return a loss or (loss, metrics dict);
    an objective exception fails the trial and the search continues."""
    if mode not in ("grid", "tpe"):
        raise HpoError(f"unknown search mode: {mode}")
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []

    if mode == "grid":
        configs = expand_grid(grid)[:n_trials]
    else:
        configs = None

    for number in range(n_trials if mode == "tpe" else len(configs)):
        if mode == "grid":
            config = configs[number]
        elif number < policy.n_startup:
            config = grid.fixed()
            for p in grid.varying():
                cands = grid.entries[p]
                config[p] = cands[int(rng.integers(len(cands)))]
        else:
            config = _suggest_tpe(grid, trials, rng, policy)

        trial = Trial(number=number, config=config, datetime_start=_now())
        try:
            result = objective(config)
        except Exception:
            trial.state = "failed"
            trial.datetime_complete = _now()
            trials.append(trial)
            continue
        if isinstance(result, tuple):
            trial.loss, trial.metrics = float(result[0]), dict(result[1])
        else:
            trial.loss = float(result)
        trial.datetime_complete = _now()
        trials.append(trial)

    complete = [t for t in trials if t.state == "complete"]
    if not complete:
        raise HpoError("no successful trials")
    best = min(complete, key=lambda t: t.loss)
    return StudyResult(trials, best)


def trials_to_csv(trials: Sequence[Trial]) -> str:
    """Results table: number,value,datetime_start,datetime_complete,
    one column per param, state."""
    params = sorted({p for t in trials for p in t.config})
    metrics = sorted({m for t in trials for m in t.metrics})
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["number", "value", "datetime_start", "datetime_complete"]
        + params + metrics + ["state"]
    )
    for t in trials:
        writer.writerow(
            [t.number, "" if t.loss is None else t.loss, t.datetime_start, t.datetime_complete]
            + [t.config.get(p, "") for p in params]
            + [t.metrics.get(m, "") for m in metrics]
            + [t.state]
        )
    return out.getvalue()


def compute_param_importance(trials: Sequence[Trial], seed: int = 0) -> dict:
    """Approximate fANOVA importance from a random-forest surrogate.

    Fits a seeded forest (64 trees, depth <= 8) mapping configs to losses
    and attributes normalized total variance reduction to each parameter.
    Parameters constant across trials are not scored.
    """
    from sklearn.ensemble import RandomForestRegressor

    complete = [t for t in trials if t.state == "complete"]
    if len(complete) < 10:
        raise HpoError("not enough data for importance (need >= 10 complete trials)")
    params = sorted({p for t in complete for p in t.config})
    scored = [
        p for p in params if len({_encode_key(t.config.get(p)) for t in complete}) >= 2
    ]
    if not scored:
        raise HpoError("not enough data for importance (no varying parameters)")

    columns = []
    for p in scored:
        raw = [t.config.get(p) for t in complete]
        if _is_numeric(raw):
            columns.append([float(v) for v in raw])
        else:
            order = {v: i for i, v in enumerate(sorted({str(v) for v in raw}))}
            columns.append([float(order[str(v)]) for v in raw])
    X = np.array(columns).T
    y = np.array([t.loss for t in complete])

    forest = RandomForestRegressor(
        n_estimators=64, max_depth=8, random_state=seed, bootstrap=True
    )
    forest.fit(X, y)
    raw_importance = forest.feature_importances_
    total = raw_importance.sum()
    if total == 0:
        raw_importance = np.full(len(scored), 1.0 / len(scored))
        total = 1.0
    return {p: float(v / total) for p, v in zip(scored, raw_importance)}


def _encode_key(value):
    return str(value)


def importance_csv(importances: dict) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["param", "importance"])
    for param in sorted(importances, key=importances.get, reverse=True):
        writer.writerow([param, importances[param]])
    return out.getvalue()
