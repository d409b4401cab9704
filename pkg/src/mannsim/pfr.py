"""Partial-frequency-reuse band plans, UE classification, RSRQ
measurement and the per-epoch scheduling engine.

An epoch is the steady state of a full-buffer proportional-fair
scheduler over flat channels: every UE of a band gets an equal time
share of all that band's RBs, so its throughput is the band's summed
per-RB rate divided by the number of UEs sharing it. Bands with no UEs
stay silent (full isolation).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linklevel import ChannelGains, ChannelParams, RsrqReport, rate_per_rb, rsrq_report_value
from .topology import CellSector, GridLayout, UeDrop

BW_LEVELS = (40, 64, 88)
RSRQ_THRESHOLDS = tuple(range(25, 34))


@dataclass(frozen=True, order=True)
class PfrConfig:
    """One combined action: center bandwidth + edge/center RSRQ threshold."""

    center_rbs: int
    rsrq_threshold: int

    def __post_init__(self):
        if self.center_rbs not in BW_LEVELS:
            raise ValueError(f"center_rbs {self.center_rbs} not in {BW_LEVELS}")
        if self.rsrq_threshold not in RSRQ_THRESHOLDS:
            raise ValueError(
                f"rsrq_threshold {self.rsrq_threshold} not in {RSRQ_THRESHOLDS}"
            )


ALL_CONFIGS: list[PfrConfig] = [
    PfrConfig(bw, thr) for bw in BW_LEVELS for thr in RSRQ_THRESHOLDS
]


@dataclass(frozen=True)
class BandPlan:
    """Per-cell RB layout: half-open center and edge ranges plus per-RB
    transmit power per band class."""

    cell_id: int
    center_rb_range: tuple[int, int]
    edge_rb_range: tuple[int, int]
    per_rb_power_dbm: dict

    def width(self, rb_class: str) -> int:
        a, b = self.center_rb_range if rb_class == "center" else self.edge_rb_range
        return b - a

    def rbs(self, rb_class: str) -> tuple[int, int]:
        return self.center_rb_range if rb_class == "center" else self.edge_rb_range


@dataclass
class ThroughputReport:
    cell_id: int
    per_ue_bps: dict  # ue_id -> bits/second
    n_ues: int
    epoch_id: int


@dataclass
class TxState:
    """Transmit state of one epoch: the plans and the realized per-RB
    power matrix (mW, zeros where a band was silent). Feeds the next
    epoch's RSRQ measurement."""

    plans: dict
    tx_mw: np.ndarray  # (n_cells, n_rbs)


def band_plan_for(
    config: PfrConfig, sector: CellSector, params: ChannelParams = ChannelParams()
) -> BandPlan:
    """PFR plan: center block at the bottom of the band, the sector's
    orthogonal-group slice of the remainder as its edge block."""
    c = config.center_rbs
    edge_width = (params.n_rbs - c) // 3
    k = sector.sector_index_mod3
    return BandPlan(
        cell_id=sector.cell_id,
        center_rb_range=(0, c),
        edge_rb_range=(c + k * edge_width, c + (k + 1) * edge_width),
        per_rb_power_dbm={
            "center": params.tx_center_dbm_per_rb,
            "edge": params.tx_edge_dbm_per_rb,
        },
    )


def full_reuse_plan(cell_id: int, params: ChannelParams = ChannelParams()) -> BandPlan:
    """All RBs in one shared band at uniform power."""
    return BandPlan(
        cell_id=cell_id,
        center_rb_range=(0, params.n_rbs),
        edge_rb_range=(params.n_rbs, params.n_rbs),
        per_rb_power_dbm={
            "center": params.tx_center_dbm_per_rb,
            "edge": params.tx_edge_dbm_per_rb,
        },
    )


def hard_reuse_plan(sector: CellSector, params: ChannelParams = ChannelParams()) -> BandPlan:
    """Reuse-3 plan: no shared band, the whole spectrum split into three
    orthogonal blocks (33/33/34) by sector group, all UEs in the block.
    The block transmits at center-RB power; there is no boosted class."""
    bounds = [0, params.n_rbs // 3, 2 * (params.n_rbs // 3), params.n_rbs]
    k = sector.sector_index_mod3
    return BandPlan(
        cell_id=sector.cell_id,
        center_rb_range=(0, 0),
        edge_rb_range=(bounds[k], bounds[k + 1]),
        per_rb_power_dbm={
            "center": params.tx_center_dbm_per_rb,
            "edge": params.tx_center_dbm_per_rb,
        },
    )


def classify_ues(reports: list[RsrqReport], threshold: int):
    """Split UEs on the report integer: strictly above => center."""
    if threshold not in RSRQ_THRESHOLDS:
        raise ValueError(f"threshold {threshold} not in {RSRQ_THRESHOLDS}")
    center = [r.ue_id for r in reports if r.report_value > threshold]
    edge = [r.ue_id for r in reports if r.report_value <= threshold]
    return center, edge


def _dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def transmit_matrix(
    plans: dict,
    partitions: dict,
    n_cells: int,
    params: ChannelParams,
) -> np.ndarray:
    """Realized per-RB transmit power (mW) of every cell under the given
    plans and UE partitions; a band with no UEs stays at zero."""
    tx = np.zeros((n_cells, params.n_rbs))
    for cell, plan in plans.items():
        center_idx, edge_idx = partitions[cell]
        for rb_class, members in (("center", center_idx), ("edge", edge_idx)):
            a, b = plan.rbs(rb_class)
            if len(members) and b > a:
                tx[cell, a:b] = _dbm_to_mw(plan.per_rb_power_dbm[rb_class])
    return tx


def _occupied_matrix(plans: dict, n_cells: int, params: ChannelParams) -> np.ndarray:
    """Transmit matrix with every non-empty band assumed loaded."""
    tx = np.zeros((n_cells, params.n_rbs))
    for cell, plan in plans.items():
        for rb_class in ("center", "edge"):
            a, b = plan.rbs(rb_class)
            if b > a:
                tx[cell, a:b] = _dbm_to_mw(plan.per_rb_power_dbm[rb_class])
    return tx


def full_reuse_state(drop: UeDrop, grid: GridLayout, params: ChannelParams) -> TxState:
    """Bootstrap transmit state: every loaded cell on all RBs."""
    plans = {c: full_reuse_plan(c, params) for c in range(grid.n_cells)}
    parts = partition_all_center(drop, plans.keys())
    return TxState(plans, transmit_matrix(plans, parts, grid.n_cells, params))


def partition_all_center(drop: UeDrop, cells) -> dict:
    return {c: (drop.attached(c), np.array([], dtype=int)) for c in cells}


def partition_all_edge(drop: UeDrop, cells) -> dict:
    return {c: (np.array([], dtype=int), drop.attached(c)) for c in cells}


def partition_by_reports(drop: UeDrop, report_values: np.ndarray, thresholds: dict) -> dict:
    """Per-cell (center_idx, edge_idx) split of attached UE rows.

    thresholds maps cell_id to an integer threshold, or None for cells
    that do not split (all UEs in the center band, e.g. full reuse).
    """
    parts = {}
    for cell, thr in thresholds.items():
        idx = drop.attached(cell)
        if thr is None:
            parts[cell] = (idx, np.array([], dtype=int))
        else:
            is_center = report_values[idx] > thr
            parts[cell] = (idx[is_center], idx[~is_center])
    return parts


def _rsrq_db_from_components(sig: np.ndarray, interf: np.ndarray, noise: float) -> np.ndarray:
    """Combine per-RB-averaged serving power, interference and noise into
    the RSRQ dB value: N_rb * RSRP / RSSI with an RS-symbol RSSI (cells
    present at reference-symbol duty 2/12), so the report does not depend
    on the serving cell's own data load."""
    return 10.0 * np.log10(sig / (2.0 * (sig + interf) + 12.0 * noise))


def measure_rsrq(
    drop: UeDrop,
    grid: GridLayout,
    chan: ChannelGains,
    prev_state: TxState,
    params: ChannelParams,
):
    """Per-UE RSRQ under the previous epoch's transmit state.

    Measured over the serving cell's center band (its occupied band for
    plans without one): reference power always at center-RB level, the
    interference averaged over the measured RBs from the cells that
    actually transmitted there. Returns (rsrq_db, report_value) arrays
    over all UEs, inner first then ring.
    """
    n_all = len(chan.gain_lin)
    rx_all = chan.gain_lin @ prev_state.tx_mw
    noise = params.noise_mw_per_rb
    p_center = _dbm_to_mw(params.tx_center_dbm_per_rb)

    rsrq_db = np.zeros(n_all)
    serving = drop.all_serving
    for cell in np.unique(serving):
        plan = prev_state.plans[int(cell)]
        band = plan.center_rb_range
        if band[1] <= band[0]:
            band = plan.edge_rb_range
        if band[1] <= band[0]:
            band = (0, params.n_rbs)
        a, b = band
        idx = np.flatnonzero(serving == cell)
        g = chan.gain_lin[idx, cell]
        own = g[:, None] * prev_state.tx_mw[cell, a:b][None, :]
        interf = (rx_all[idx, a:b] - own).mean(axis=1)
        sig = g * p_center
        rsrq_db[idx] = _rsrq_db_from_components(sig, interf, noise)
    return rsrq_db, rsrq_report_value(rsrq_db)


def reports_for_cell(
    drop: UeDrop, cell_id: int, rsrq_db: np.ndarray, report_values: np.ndarray
) -> list[RsrqReport]:
    idx = drop.attached(cell_id)
    ids = drop.all_ue_ids
    return [
        RsrqReport(int(ids[i]), int(report_values[i]), float(rsrq_db[i])) for i in idx
    ]


def simulate_epoch(
    drop: UeDrop,
    grid: GridLayout,
    chan: ChannelGains,
    plans: dict,
    partitions: dict,
    params: ChannelParams,
    epoch_id: int = 0,
):
    """Run one scheduling epoch; returns (reports by cell, TxState).

    Every UE's throughput is its band's per-RB rate summed over the band
    and divided by the band's UE count (equal PF time share).
    """
    tx_mw = transmit_matrix(plans, partitions, grid.n_cells, params)
    rx_all = chan.gain_lin @ tx_mw
    noise = params.noise_mw_per_rb
    ue_ids = drop.all_ue_ids

    reports = {}
    for cell, plan in plans.items():
        center_idx, edge_idx = partitions[cell]
        per_ue = {}
        for rb_class, members in (("center", center_idx), ("edge", edge_idx)):
            if len(members) == 0:
                continue
            a, b = plan.rbs(rb_class)
            if b <= a:
                raise ValueError(
                    f"cell {cell}: UEs assigned to empty {rb_class} band"
                )
            srx = chan.gain_lin[members, cell] * _dbm_to_mw(
                plan.per_rb_power_dbm[rb_class]
            )
            interf = rx_all[np.ix_(members, np.arange(a, b))] - srx[:, None]
            sinr = srx[:, None] / (noise + interf)
            rates = rate_per_rb(sinr, params)
            share = rates.sum(axis=1) / len(members)
            for ue_row, tp in zip(members, share):
                per_ue[int(ue_ids[ue_row])] = float(tp)
        reports[cell] = ThroughputReport(
            cell_id=cell,
            per_ue_bps=per_ue,
            n_ues=len(center_idx) + len(edge_idx),
            epoch_id=epoch_id,
        )
    return reports, TxState(dict(plans), tx_mw)


def schedule_epoch(
    drop: UeDrop,
    configs: dict,
    *,
    grid: GridLayout,
    params: ChannelParams = ChannelParams(),
    prev_state: TxState | None = None,
    chan: ChannelGains | None = None,
    epoch_id: int = 0,
) -> dict:
    """One PFR epoch where every configured cell applies its PfrConfig.

    UEs are classified against each cell's threshold using RSRQ measured
    under prev_state (full reuse when omitted). Every cell that serves at
    least one UE must appear in configs.
    """
    if chan is None:
        chan = ChannelGains(drop, grid, params)
    active = set(int(c) for c in np.unique(drop.all_serving))
    missing = active - set(configs)
    if missing:
        raise ValueError(f"no PfrConfig for active cell(s) {sorted(missing)}")
    if prev_state is None:
        prev_state = full_reuse_state(drop, grid, params)
    _, report_values = measure_rsrq(drop, grid, chan, prev_state, params)
    thresholds = {c: cfg.rsrq_threshold for c, cfg in configs.items()}
    partitions = partition_by_reports(drop, report_values, thresholds)
    plans = {
        c: band_plan_for(cfg, grid.sectors[c], params) for c, cfg in configs.items()
    }
    reports, _ = simulate_epoch(drop, grid, chan, plans, partitions, params, epoch_id)
    return reports


def full_reuse_epoch(
    drop: UeDrop,
    *,
    grid: GridLayout,
    params: ChannelParams = ChannelParams(),
    chan: ChannelGains | None = None,
    epoch_id: int = 0,
) -> dict:
    """Baseline epoch: every cell uses all RBs for all its UEs."""
    if chan is None:
        chan = ChannelGains(drop, grid, params)
    cells = range(grid.n_cells)
    plans = {c: full_reuse_plan(c, params) for c in cells}
    partitions = partition_all_center(drop, cells)
    reports, _ = simulate_epoch(drop, grid, chan, plans, partitions, params, epoch_id)
    return reports


def cell_metric(report: ThroughputReport, metric_kind: str = "maxmin") -> float:
    """Scalar cell performance: UE-count-weighted minimum throughput, or
    the plain mean. Empty cells score zero."""
    values = list(report.per_ue_bps.values())
    if metric_kind == "maxmin":
        return report.n_ues * min(values) if values else 0.0
    if metric_kind == "mean":
        return float(np.mean(values)) if values else 0.0
    raise ValueError(f"unknown metric_kind {metric_kind!r}")


def sinr_per_rb(
    ue_id: int,
    rb_class: str,
    drop: UeDrop,
    plans: dict,
    *,
    grid: GridLayout,
    params: ChannelParams = ChannelParams(),
    partitions: dict | None = None,
    chan: ChannelGains | None = None,
) -> np.ndarray:
    """Linear SINR of one UE on each RB of its serving cell's rb_class
    band. Without partitions every non-empty band is assumed loaded;
    with them, silent bands contribute no interference."""
    if rb_class not in ("center", "edge"):
        raise ValueError(f"rb_class must be 'center' or 'edge', got {rb_class!r}")
    ids = drop.all_ue_ids
    rows = np.flatnonzero(ids == ue_id)
    if len(rows) == 0:
        raise ValueError(f"unknown UE id {ue_id}")
    row = int(rows[0])
    if chan is None:
        chan = ChannelGains(drop, grid, params)
    serving = int(drop.all_serving[row])
    plan = plans[serving]
    a, b = plan.rbs(rb_class)
    if b <= a:
        raise ValueError(f"cell {serving} has an empty {rb_class} band")
    if partitions is None:
        tx = _occupied_matrix(plans, grid.n_cells, params)
    else:
        tx = transmit_matrix(plans, partitions, grid.n_cells, params)
    srx = chan.gain_lin[row, serving] * _dbm_to_mw(plan.per_rb_power_dbm[rb_class])
    total = chan.gain_lin[row] @ tx[:, a:b]
    interf = total - chan.gain_lin[row, serving] * tx[serving, a:b]
    return srx / (params.noise_mw_per_rb + interf)


def write_throughput_csv(reports_by_epoch, path: str | Path) -> None:
    """CSV of per-UE throughputs: epoch_id,cell_id,ue_id,throughput_bps."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch_id", "cell_id", "ue_id", "throughput_bps"])
        for reports in reports_by_epoch:
            for cell in sorted(reports):
                rep = reports[cell]
                for ue in sorted(rep.per_ue_bps):
                    w.writerow([rep.epoch_id, cell, ue, repr(rep.per_ue_bps[ue])])
