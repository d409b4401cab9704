"""Cell agents and the bandwidth coordinator.

Each epoch every coordinated cell turns its UEs' RSRQ reports into a
10-bin histogram, scores all 27 (bandwidth, threshold) actions with the
regressor, and uploads a 3-component gain vector (best predicted gain
per bandwidth). The coordinator sums the vectors, broadcasts the winning
bandwidth, and each cell adopts its own best threshold for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linklevel import ChannelGains, ChannelParams, RsrqReport
from .pfr import (
    BW_LEVELS,
    RSRQ_THRESHOLDS,
    PfrConfig,
    TxState,
    full_reuse_state,
    measure_rsrq,
    reports_for_cell,
)
from .topology import GridLayout, UeDrop


@dataclass
class RsrqHistogram:
    """UE counts per report bin: [<25], 25, 26, ..., 32, [>=33]."""

    counts: np.ndarray  # (10,) ints

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class GainVector:
    cell_id: int
    gains: tuple  # predicted normalized metric per bandwidth in BW_LEVELS order
    best_threshold_per_bw: tuple


@dataclass
class CoordinatorDecision:
    winning_bw: int
    per_bw_totals: tuple
    epoch_id: int


def extract_features(reports: list[RsrqReport]) -> RsrqHistogram:
    counts = np.zeros(10, dtype=int)
    for r in reports:
        v = r.report_value
        if v < 25:
            counts[0] += 1
        elif v >= 33:
            counts[9] += 1
        else:
            counts[v - 24] += 1
    return RsrqHistogram(counts)


def evaluate_actions(hist: RsrqHistogram, model) -> dict:
    """Predicted gain for each of the 27 actions, one forward pass each."""
    return {
        PfrConfig(bw, thr): model.predict(hist.counts, bw, thr)
        for bw in BW_LEVELS
        for thr in RSRQ_THRESHOLDS
    }


def best_threshold_for_bw(evaluations: dict, bw: int):
    """(threshold, gain) maximizing the predicted gain at fixed bandwidth;
    ties go to the lowest threshold."""
    best_thr, best_gain = None, -np.inf
    for thr in RSRQ_THRESHOLDS:
        g = evaluations[PfrConfig(bw, thr)]
        if g > best_gain:
            best_thr, best_gain = thr, g
    return best_thr, best_gain


def make_gain_vector(evaluations: dict, cell_id: int) -> GainVector:
    thrs, gains = [], []
    for bw in BW_LEVELS:
        thr, g = best_threshold_for_bw(evaluations, bw)
        thrs.append(thr)
        gains.append(g)
    return GainVector(cell_id=cell_id, gains=tuple(gains), best_threshold_per_bw=tuple(thrs))


def coordinate(gain_vectors: list[GainVector], epoch_id: int = 0) -> CoordinatorDecision:
    """Sum the per-bandwidth gains over cells and pick the argmax
    bandwidth; ties go to the smallest bandwidth."""
    seen = set()
    for gv in gain_vectors:
        if gv.cell_id in seen:
            raise ValueError(f"duplicate gain vector for cell {gv.cell_id}")
        seen.add(gv.cell_id)
    totals = np.sum([gv.gains for gv in gain_vectors], axis=0)
    winning = BW_LEVELS[int(np.argmax(totals))]  # argmax takes first on ties
    return CoordinatorDecision(
        winning_bw=winning, per_bw_totals=tuple(float(t) for t in totals), epoch_id=epoch_id
    )


def decision_round(
    drop: UeDrop,
    model,
    epoch_id: int = 0,
    *,
    grid: GridLayout,
    params: ChannelParams = ChannelParams(),
    prev_state: TxState | None = None,
    chan: ChannelGains | None = None,
    measurement: tuple | None = None,
    trace: list | None = None,
) -> dict:
    """One full coordination round over the 9 inner cells.

    RSRQ is measured under the previous epoch's transmit state (full
    reuse on the bootstrap round); every cell then evaluates its 27
    actions, uploads its gain vector, and adopts the broadcast bandwidth
    with its own best threshold. Returns cell_id -> PfrConfig. A caller
    that already measured this round passes the (rsrq_db, report_values)
    pair as ``measurement`` so classification reuses the same reports.
    """
    if chan is None:
        chan = ChannelGains(drop, grid, params)
    if measurement is None:
        if prev_state is None:
            prev_state = full_reuse_state(drop, grid, params)
        measurement = measure_rsrq(drop, grid, chan, prev_state, params)
    rsrq_db, report_values = measurement

    vectors = []
    per_cell_eval = {}
    for cell in grid.inner_cell_ids:
        hist = extract_features(reports_for_cell(drop, cell, rsrq_db, report_values))
        evals = evaluate_actions(hist, model)
        per_cell_eval[cell] = evals
        gv = make_gain_vector(evals, cell)
        vectors.append(gv)
        if trace is not None:
            trace.append(
                {
                    "epoch": epoch_id,
                    "from": cell,
                    "to": "coordinator",
                    "kind": "gains",
                    "payload": {
                        "gains": list(gv.gains),
                        "best_threshold_per_bw": list(gv.best_threshold_per_bw),
                    },
                }
            )

    decision = coordinate(vectors, epoch_id)
    if trace is not None:
        trace.append(
            {
                "epoch": epoch_id,
                "from": "coordinator",
                "to": "*",
                "kind": "broadcast",
                "payload": {
                    "winning_bw": decision.winning_bw,
                    "per_bw_totals": list(decision.per_bw_totals),
                },
            }
        )

    bw_ix = BW_LEVELS.index(decision.winning_bw)
    adopted = {}
    for gv in vectors:
        adopted[gv.cell_id] = PfrConfig(
            center_rbs=decision.winning_bw,
            rsrq_threshold=gv.best_threshold_per_bw[bw_ix],
        )
    return adopted
