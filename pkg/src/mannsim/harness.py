"""Experiment pipeline: random-action sample collection, evaluation
campaigns (coordinated agents vs. baselines) and their statistics.

Drops are independent units of work; with MANN_THREADS > 1 they fan out
over a process pool and results are merged in input order, so output is
identical regardless of scheduling.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import decision_round, extract_features
from .linklevel import ChannelGains, ChannelParams
from .neuralnet import NormalizationSpec, RegressionModel, SampleRecord
from .pfr import (
    ALL_CONFIGS,
    PfrConfig,
    band_plan_for,
    cell_metric,
    full_reuse_plan,
    full_reuse_state,
    hard_reuse_plan,
    measure_rsrq,
    partition_all_edge,
    partition_by_reports,
    reports_for_cell,
    simulate_epoch,
)
from .rng import substream
from .topology import GridLayout, UeDrop

MODES = ("mann", "full_reuse", "hard_reuse", "static")

_DEFAULT_EPOCHS = {"mann": 3, "static": 3, "full_reuse": 1, "hard_reuse": 1}


def _workers() -> int:
    return max(1, int(os.environ.get("MANN_THREADS", "1")))


def _pool_map(fn, items):
    if _workers() == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(_workers(), len(items))) as ex:
        return list(ex.map(fn, items))


@dataclass
class Campaign:
    mode: str
    drops: list
    static_config: PfrConfig | None = None
    epochs_per_drop: int | None = None
    metric_kind: str = "maxmin"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "static" and self.static_config is None:
            raise ValueError("static mode needs a static_config")
        if (self.epochs_per_drop or 1) < 1:
            raise ValueError("epochs_per_drop must be >= 1")

    @property
    def epochs(self) -> int:
        return self.epochs_per_drop or _DEFAULT_EPOCHS[self.mode]


@dataclass
class EvalSummary:
    """Pooled final-epoch results over the evaluated cells."""

    mode: str
    per_ue: list  # (drop_id, cell_id, ue_id, throughput_bps)
    per_cell_totals: list  # (drop_id, cell_id, total_bps, n_ues)
    percentile_stats: dict = field(default_factory=dict)
    totals_ratio_vs_baseline: float | None = None

    @property
    def pool(self) -> np.ndarray:
        return np.array([row[3] for row in self.per_ue], dtype=float)


def bottom_fraction_mean(pool: np.ndarray, percentile: float) -> float:
    """Mean of the lowest-p% of the pool; p=0 means the single worst."""
    if len(pool) == 0:
        raise ValueError("empty throughput pool")
    s = np.sort(pool)
    k = 1 if percentile == 0 else max(1, math.ceil(len(s) * percentile / 100.0))
    return float(s[:k].mean())


# --- per-drop simulation for each mode ---------------------------------


def _simulate_static_drop(drop, grid, params, config: PfrConfig, epochs: int):
    chan = ChannelGains(drop, grid, params)
    state = full_reuse_state(drop, grid, params)
    thresholds = {c: config.rsrq_threshold for c in range(grid.n_cells)}
    plans = {
        c: band_plan_for(config, grid.sectors[c], params) for c in range(grid.n_cells)
    }
    reports = None
    for e in range(epochs):
        _, report_values = measure_rsrq(drop, grid, chan, state, params)
        partitions = partition_by_reports(drop, report_values, thresholds)
        reports, state = simulate_epoch(drop, grid, chan, plans, partitions, params, e)
    return reports


def _simulate_full_reuse_drop(drop, grid, params, epochs: int):
    chan = ChannelGains(drop, grid, params)
    plans = {c: full_reuse_plan(c, params) for c in range(grid.n_cells)}
    partitions = {c: (drop.attached(c), np.array([], dtype=int)) for c in plans}
    reports = None
    for e in range(epochs):
        reports, _ = simulate_epoch(drop, grid, chan, plans, partitions, params, e)
    return reports


def _simulate_hard_reuse_drop(drop, grid, params, epochs: int):
    chan = ChannelGains(drop, grid, params)
    plans = {
        c: hard_reuse_plan(grid.sectors[c], params) for c in range(grid.n_cells)
    }
    partitions = partition_all_edge(drop, plans.keys())
    reports = None
    for e in range(epochs):
        reports, _ = simulate_epoch(drop, grid, chan, plans, partitions, params, e)
    return reports


def _simulate_mann_drop(drop, grid, params, model, epochs: int, trace=None):
    chan = ChannelGains(drop, grid, params)
    state = full_reuse_state(drop, grid, params)
    ring = grid.ring_cell_ids
    reports = None
    for e in range(epochs):
        measurement = measure_rsrq(drop, grid, chan, state, params)
        configs = decision_round(
            drop, model, e, grid=grid, params=params, prev_state=state,
            chan=chan, measurement=measurement, trace=trace,
        )
        thresholds = {c: cfg.rsrq_threshold for c, cfg in configs.items()}
        thresholds.update({c: None for c in ring})
        partitions = partition_by_reports(drop, measurement[1], thresholds)
        plans = {
            c: band_plan_for(cfg, grid.sectors[c], params) for c, cfg in configs.items()
        }
        plans.update({c: full_reuse_plan(c, params) for c in ring})
        reports, state = simulate_epoch(drop, grid, chan, plans, partitions, params, e)
    return reports


def _run_drop(task):
    mode, drop, grid, params, model, static_config, epochs = task
    if mode == "static":
        return _simulate_static_drop(drop, grid, params, static_config, epochs)
    if mode == "full_reuse":
        return _simulate_full_reuse_drop(drop, grid, params, epochs)
    if mode == "hard_reuse":
        return _simulate_hard_reuse_drop(drop, grid, params, epochs)
    return _simulate_mann_drop(drop, grid, params, model, epochs)


def run_campaign(
    campaign: Campaign,
    model: RegressionModel | None = None,
    *,
    grid: GridLayout,
    params: ChannelParams = ChannelParams(),
    trace: list | None = None,
) -> EvalSummary:
    """Simulate every drop under the campaign mode and pool the final
    epoch's per-UE throughputs from the evaluated cells only."""
    if campaign.mode == "mann":
        if model is None:
            raise ValueError("mann campaigns need a trained model")
        if model.metric_kind != campaign.metric_kind:
            raise ValueError(
                f"model metric {model.metric_kind!r} does not match "
                f"campaign metric {campaign.metric_kind!r}"
            )
    if trace is not None and campaign.mode == "mann":
        # tracing pins the work to this process so records stay ordered
        all_reports = [
            _simulate_mann_drop(d, grid, params, model, campaign.epochs, trace)
            for d in campaign.drops
        ]
    else:
        tasks = [
            (campaign.mode, d, grid, params, model, campaign.static_config, campaign.epochs)
            for d in campaign.drops
        ]
        all_reports = _pool_map(_run_drop, tasks)

    per_ue, per_cell = [], []
    for drop, reports in zip(campaign.drops, all_reports):
        for cell in grid.eval_cell_ids:
            rep = reports[cell]
            for ue in sorted(rep.per_ue_bps):
                per_ue.append((drop.drop_id, cell, ue, rep.per_ue_bps[ue]))
            per_cell.append(
                (drop.drop_id, cell, float(sum(rep.per_ue_bps.values())), rep.n_ues)
            )
    summary = EvalSummary(mode=campaign.mode, per_ue=per_ue, per_cell_totals=per_cell)
    if per_ue:
        pool = summary.pool
        summary.percentile_stats = {
            p: bottom_fraction_mean(pool, p) for p in (10, 5, 1, 0)
        }
    return summary


def run_static_sweep(
    drops: list,
    *,
    grid: GridLayout,
    params: ChannelParams = ChannelParams(),
    epochs_per_drop: int | None = None,
    metric_kind: str = "maxmin",
) -> dict:
    """One static campaign per PFR configuration (27 in total)."""
    out = {}
    for cfg in ALL_CONFIGS:
        camp = Campaign(
            mode="static", drops=drops, static_config=cfg,
            epochs_per_drop=epochs_per_drop, metric_kind=metric_kind,
        )
        out[cfg] = run_campaign(camp, grid=grid, params=params)
    return out


# --- sample collection --------------------------------------------------


def _collect_drop(task):
    drop, grid, params, seed, epochs, metric_kind = task
    chan = ChannelGains(drop, grid, params)
    state = full_reuse_state(drop, grid, params)
    ring = grid.ring_cell_ids
    rng = substream(seed, "collect", drop.drop_id)
    samples = []
    for e in range(epochs):
        rsrq_db, report_values = measure_rsrq(drop, grid, chan, state, params)
        hists = {
            c: extract_features(reports_for_cell(drop, c, rsrq_db, report_values))
            for c in grid.inner_cell_ids
        }
        actions = rng.integers(0, len(ALL_CONFIGS), len(grid.inner_cell_ids))
        configs = {
            c: ALL_CONFIGS[int(a)] for c, a in zip(grid.inner_cell_ids, actions)
        }
        thresholds = {c: cfg.rsrq_threshold for c, cfg in configs.items()}
        thresholds.update({c: None for c in ring})
        partitions = partition_by_reports(drop, report_values, thresholds)
        plans = {
            c: band_plan_for(cfg, grid.sectors[c], params) for c, cfg in configs.items()
        }
        plans.update({c: full_reuse_plan(c, params) for c in ring})
        reports, state = simulate_epoch(drop, grid, chan, plans, partitions, params, e)
        for c in grid.inner_cell_ids:
            samples.append(
                SampleRecord(
                    bins=hists[c].counts.copy(),
                    center_rbs=configs[c].center_rbs,
                    rsrq_threshold=configs[c].rsrq_threshold,
                    raw_metric=cell_metric(reports[c], metric_kind),
                    cell_id=c,
                    drop_id=drop.drop_id,
                    epoch_id=e,
                )
            )
    return samples


def collect_samples(
    drops: list,
    grid: GridLayout,
    seed: int,
    *,
    params: ChannelParams = ChannelParams(),
    epochs_per_drop: int = 30,
    metric_kind: str = "maxmin",
) -> list[SampleRecord]:
    """Random-action exploration: every inner cell draws a uniform action
    each epoch (all nine simultaneously, so labels carry the cross-cell
    interference coupling). One sample per (cell, epoch, drop)."""
    tasks = [(d, grid, params, seed, epochs_per_drop, metric_kind) for d in drops]
    out = []
    for chunk in _pool_map(_collect_drop, tasks):
        out.extend(chunk)
    return out


# --- statistics ---------------------------------------------------------


@dataclass
class RegressionMetrics:
    correlation: float
    mae: float
    mape: float
    rmse: float
    n_zero_excluded: int


def regression_metrics(predictions, targets) -> RegressionMetrics:
    """Forecast quality on normalized values. MAPE skips zero targets and
    reports how many were skipped; correlation is NaN when undefined."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError("predictions and targets must have equal length")
    if len(p) < 2:
        raise ValueError("need at least 2 points")
    if t.std() == 0 or p.std() == 0:
        corr = float("nan")
    else:
        corr = float(np.corrcoef(p, t)[0, 1])
    err = p - t
    nz = t != 0
    mape = float(np.mean(np.abs(err[nz] / t[nz]))) if nz.any() else float("nan")
    return RegressionMetrics(
        correlation=corr,
        mae=float(np.mean(np.abs(err))),
        mape=mape,
        rmse=float(np.sqrt(np.mean(err * err))),
        n_zero_excluded=int((~nz).sum()),
    )


def predictions_on_samples(model: RegressionModel, samples: list[SampleRecord]):
    """(predictions, normalized targets) of the model over a sample set."""
    preds = np.array(
        [model.predict(s.bins, s.center_rbs, s.rsrq_threshold) for s in samples]
    )
    targets = np.array([model.norm.target(s.raw_metric) for s in samples])
    return preds, targets


@dataclass
class ImprovementTable:
    gains: dict  # percentile -> relative gain (0.1 == +10%)
    totals_ratio: float


def percentile_improvements(
    test: EvalSummary, baseline: EvalSummary, percentiles=(10, 5, 1, 0)
) -> ImprovementTable:
    """Relative bottom-percentile gains of test over baseline plus the
    total-throughput retention ratio. p=0 is the single worst UE; a zero
    baseline with a positive test value reports an infinite gain."""
    tp, bp = test.pool, baseline.pool
    if len(tp) == 0 or len(bp) == 0:
        raise ValueError("empty throughput pool")
    gains = {}
    for p in percentiles:
        tm = bottom_fraction_mean(tp, p)
        bm = bottom_fraction_mean(bp, p)
        if bm == 0:
            gains[p] = float("inf") if tm > 0 else 0.0
        else:
            gains[p] = tm / bm - 1.0
    ratio = float(tp.sum() / bp.sum())
    test.totals_ratio_vs_baseline = ratio
    return ImprovementTable(gains=gains, totals_ratio=ratio)


def cdf_export(summary: EvalSummary, path: str | Path) -> None:
    """Sorted pooled throughputs with empirical CDF ordinates, plus a
    per-cell totals CSV next to it (<stem>_cells.csv)."""
    if len(summary.per_ue) == 0:
        raise ValueError("empty throughput pool")
    path = Path(path)
    pool = np.sort(summary.pool)
    n = len(pool)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["throughput_bps", "cdf"])
        for i, v in enumerate(pool):
            w.writerow([repr(float(v)), repr((i + 1) / n)])
    cells_path = path.with_name(path.stem + "_cells" + path.suffix)
    with cells_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["drop_id", "cell_id", "total_bps", "n_ues"])
        for drop_id, cell, total, n_ues in summary.per_cell_totals:
            w.writerow([drop_id, cell, repr(float(total)), n_ues])


def write_per_ue_csv(summary: EvalSummary, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["drop_id", "cell_id", "ue_id", "throughput_bps"])
        for drop_id, cell, ue, bps in summary.per_ue:
            w.writerow([drop_id, cell, ue, repr(float(bps))])


def read_per_ue_csv(path: str | Path) -> EvalSummary:
    per_ue = []
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["drop_id", "cell_id", "ue_id", "throughput_bps"]:
            raise ValueError(f"{path}: unexpected per-UE header {header}")
        for row in r:
            per_ue.append((row[0], int(row[1]), int(row[2]), float(row[3])))
    return EvalSummary(mode="loaded", per_ue=per_ue, per_cell_totals=[])
