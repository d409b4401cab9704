"""Link-level abstraction: pathloss, antenna pattern, received power,
RSRQ reporting and the per-RB rate curve.

All functions accept scalars or numpy arrays and are pure given their
parameters. Powers are handled in dBm per resource block (RB) on the dB
side and in mW on the linear side.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .rng import substream

if TYPE_CHECKING:
    from .topology import CellSector, GridLayout, UeDrop


@dataclass(frozen=True)
class ChannelParams:
    """Radio parameters of the link abstraction.

    tx_power_dbm_total is spread evenly over n_rbs to give the center-RB
    power; edge RBs add edge_power_boost_db on top of that (total cell
    power is whatever the active plan sums to, never renormalized).
    """

    tx_power_dbm_total: float = 46.0
    edge_power_boost_db: float = 3.0
    noise_psd_dbm_hz: float = -174.0
    rb_bandwidth_hz: float = 180e3
    antenna_theta3db_deg: float = 70.0
    antenna_max_atten_db: float = 25.0
    antenna_boresight_gain_dbi: float = 14.0
    min_distance_m: float = 35.0
    shadowing_sigma_db: float = 0.0
    n_rbs: int = 100
    se_attenuation: float = 0.6
    se_cap_bps_hz: float = 4.4
    sinr_cutoff_db: float = -10.0

    @property
    def tx_center_dbm_per_rb(self) -> float:
        return self.tx_power_dbm_total - 10.0 * np.log10(self.n_rbs)

    @property
    def tx_edge_dbm_per_rb(self) -> float:
        return self.tx_center_dbm_per_rb + self.edge_power_boost_db

    @property
    def noise_dbm_per_rb(self) -> float:
        return self.noise_psd_dbm_hz + 10.0 * np.log10(self.rb_bandwidth_hz)

    @property
    def noise_mw_per_rb(self) -> float:
        return float(10.0 ** (self.noise_dbm_per_rb / 10.0))

    @classmethod
    def from_dict(cls, overrides: dict) -> "ChannelParams":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(overrides) - known
        if bad:
            raise ValueError(f"unknown channel parameter(s): {sorted(bad)}")
        return cls(**overrides)


@dataclass(frozen=True)
class RsrqReport:
    """One UE's quality report: raw dB value plus the integer report."""

    ue_id: int
    report_value: int
    rsrq_db: float


def pathloss_db(distance_m, params: ChannelParams = ChannelParams()):
    """Macro-cell pathloss 128.1 + 37.6 log10(d_km), clamped below
    params.min_distance_m.
    """
    d = np.maximum(np.asarray(distance_m, dtype=float), params.min_distance_m)
    return 128.1 + 37.6 * np.log10(d / 1000.0)


def antenna_gain_db(angle_off_boresight_deg, params: ChannelParams = ChannelParams()):
    """3-sector horizontal pattern: -min(12 (theta/theta3dB)^2, A_m) plus
    the boresight gain. Angles are wrapped to [-180, 180] first.
    """
    theta = np.asarray(angle_off_boresight_deg, dtype=float)
    theta = (theta + 180.0) % 360.0 - 180.0
    atten = np.minimum(
        12.0 * (theta / params.antenna_theta3db_deg) ** 2, params.antenna_max_atten_db
    )
    return params.antenna_boresight_gain_dbi - atten


def rx_power_dbm(
    tx_per_rb_dbm: float,
    sector: "CellSector",
    ue_pos,
    params: ChannelParams = ChannelParams(),
    shadow_db: float = 0.0,
) -> float:
    """Received power on one RB from one sector at one position."""
    dx = ue_pos[0] - sector.site_xy[0]
    dy = ue_pos[1] - sector.site_xy[1]
    dist = float(np.hypot(dx, dy))
    angle = float(np.degrees(np.arctan2(dy, dx))) - sector.boresight_deg
    return (
        tx_per_rb_dbm
        + float(antenna_gain_db(angle, params))
        - float(pathloss_db(dist, params))
        + shadow_db
    )


def rsrq_report_value(rsrq_db):
    """Map an RSRQ dB value to the integer report in 0..34.

    0 below -19.5 dB, 34 at or above -3 dB, 0.5 dB steps in between.
    """
    x = np.asarray(rsrq_db, dtype=float)
    val = 1 + np.floor((x + 19.5) / 0.5)
    val = np.where(x < -19.5, 0, val)
    val = np.where(x >= -3.0, 34, val)
    out = val.astype(int)
    return out if out.ndim else int(out)


def rate_per_rb(sinr_linear, params: ChannelParams = ChannelParams()):
    """Truncated-Shannon rate of one RB in bits/second.

    Spectral efficiency 0.6 log2(1+sinr) capped at 4.4 bps/Hz, zero below
    the -10 dB SINR cutoff.
    """
    sinr = np.asarray(sinr_linear, dtype=float)
    se = np.minimum(params.se_attenuation * np.log2(1.0 + sinr), params.se_cap_bps_hz)
    cutoff = 10.0 ** (params.sinr_cutoff_db / 10.0)
    rate = np.where(sinr < cutoff, 0.0, se * params.rb_bandwidth_hz)
    return rate if rate.ndim else float(rate)


def gain_matrix_db(
    positions: np.ndarray,
    site_xy: np.ndarray,
    boresight_deg: np.ndarray,
    params: ChannelParams = ChannelParams(),
    shadow_db: np.ndarray | None = None,
) -> np.ndarray:
    """(n_ue, n_sector) matrix of antenna gain minus pathloss in dB.

    Adding a per-RB transmit power in dBm to an entry gives the received
    power from that sector; shadow_db, when given, is added elementwise.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    dx = pos[:, 0:1] - site_xy[None, :, 0]
    dy = pos[:, 1:2] - site_xy[None, :, 1]
    dist = np.hypot(dx, dy)
    angle = np.degrees(np.arctan2(dy, dx)) - boresight_deg[None, :]
    g = antenna_gain_db(angle, params) - pathloss_db(dist, params)
    if shadow_db is not None:
        g = g + shadow_db
    return g


class ChannelGains:
    """Per-drop cached channel between every UE and every sector.

    Shadowing, when enabled, is drawn once per (UE, sector) pair from a
    stream derived from the drop id, so the same drop always sees the
    same fading regardless of which pipeline stage rebuilds the matrix.
    """

    def __init__(self, drop: "UeDrop", grid: "GridLayout", params: ChannelParams):
        self.params = params
        positions = drop.all_positions
        shadow = None
        if params.shadowing_sigma_db > 0:
            rng = substream(zlib.crc32(drop.drop_id.encode("utf-8")), "shadow")
            shadow = rng.normal(
                0.0, params.shadowing_sigma_db, (len(positions), len(grid.sectors))
            )
        self.gain_db = gain_matrix_db(
            positions, grid.site_xy_per_sector, grid.boresights, params, shadow
        )
        self.gain_lin = 10.0 ** (self.gain_db / 10.0)
