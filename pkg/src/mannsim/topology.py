"""Hexagonal 12-site / 36-sector layout and Thomas-cluster UE drops.

Three mutually adjacent central sites carry the 9 coordinated cells; the
9 lattice sites surrounding them form an explicit interferer ring with a
uniform 40-UE load of its own. Ring cells are never evaluated.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linklevel import ChannelParams, gain_matrix_db

MICRO_RADII_M = (75.0, 100.0, 125.0)
USERS_PER_MICRO = tuple(range(11, 21))
DISPLACEMENTS_M = (50.0, 100.0, 150.0, 175.0, 200.0, 250.0)

BORESIGHTS_DEG = (30.0, 150.0, 270.0)

# Ring UEs are written to the same drop CSV as the inner-frame UEs and
# are told apart by this id offset.
RING_UE_ID_BASE = 10000

RING_UE_COUNT = 40


@dataclass(frozen=True)
class CellSector:
    cell_id: int
    site_index: int
    boresight_deg: float
    sector_index_mod3: int
    site_xy: tuple[float, float]


@dataclass(frozen=True)
class GridLayout:
    sites: np.ndarray  # (12, 2) site positions in meters
    sectors: list[CellSector]  # 36, cell_id == index
    inner_cell_ids: list[int]
    eval_cell_ids: list[int]
    inter_site_distance: float
    frame: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    ring_box: tuple[float, float, float, float]

    @property
    def n_cells(self) -> int:
        return len(self.sectors)

    @property
    def ring_cell_ids(self) -> list[int]:
        inner = set(self.inner_cell_ids)
        return [s.cell_id for s in self.sectors if s.cell_id not in inner]

    @property
    def site_xy_per_sector(self) -> np.ndarray:
        return np.array([s.site_xy for s in self.sectors])

    @property
    def boresights(self) -> np.ndarray:
        return np.array([s.boresight_deg for s in self.sectors])


def build_grid(inter_site_distance: float = 500.0) -> GridLayout:
    """Build the 12-site, 36-sector layout.

    Sites live on a triangular lattice with the given spacing: the three
    central sites form a triangle, the remaining nine are exactly the
    lattice neighbours of that triangle. Per site there are three sectors
    with boresights 30/150/270 degrees; sector k of every site belongs to
    orthogonal-band group k. The three inner sectors whose boresight
    points at the layout centroid are the evaluated cells.
    """
    if inter_site_distance <= 0:
        raise ValueError("inter_site_distance must be positive")
    d = float(inter_site_distance)
    u = np.array([d, 0.0])
    v = np.array([d / 2.0, d * np.sqrt(3.0) / 2.0])

    inner_ij = [(0, 0), (1, 0), (0, 1)]
    ring_ij = [
        (-1, 0), (0, -1), (1, -1), (-1, 1), (2, 0),
        (1, 1), (2, -1), (0, 2), (-1, 2),
    ]
    sites = np.array([i * u + j * v for i, j in inner_ij + ring_ij])

    centroid = sites[:3].mean(axis=0)
    sectors: list[CellSector] = []
    for si, xy in enumerate(sites):
        for k, bore in enumerate(BORESIGHTS_DEG):
            sectors.append(
                CellSector(
                    cell_id=si * 3 + k,
                    site_index=si,
                    boresight_deg=bore,
                    sector_index_mod3=k,
                    site_xy=(float(xy[0]), float(xy[1])),
                )
            )

    inner_cell_ids = list(range(9))
    eval_cell_ids = []
    for si in range(3):
        to_centroid = np.degrees(
            np.arctan2(centroid[1] - sites[si][1], centroid[0] - sites[si][0])
        )
        offs = [
            abs((to_centroid - b + 180.0) % 360.0 - 180.0) for b in BORESIGHTS_DEG
        ]
        eval_cell_ids.append(si * 3 + int(np.argmin(offs)))

    inner = sites[:3]
    frame = (
        float(inner[:, 0].min() - d),
        float(inner[:, 0].max() + d),
        float(inner[:, 1].min() - d),
        float(inner[:, 1].max() + d),
    )
    ring_box = (
        float(sites[:, 0].min() - d),
        float(sites[:, 0].max() + d),
        float(sites[:, 1].min() - d),
        float(sites[:, 1].max() + d),
    )
    return GridLayout(
        sites=sites,
        sectors=sectors,
        inner_cell_ids=inner_cell_ids,
        eval_cell_ids=eval_cell_ids,
        inter_site_distance=d,
        frame=frame,
        ring_box=ring_box,
    )


@dataclass(frozen=True)
class DropConfig:
    """One point of the UE-distribution sweep."""

    micro_radius_m: float
    users_per_micro: int
    displacement_m: float
    n_uniform: int = 40
    n_macro_clusters: int = 3
    n_micro_per_macro: int = 3

    @property
    def total_ues(self) -> int:
        return self.n_uniform + self.n_macro_clusters * self.n_micro_per_macro * self.users_per_micro

    def validate(self) -> None:
        # users_per_micro == 0 is the documented degenerate (uniform-only) case
        if self.micro_radius_m not in MICRO_RADII_M:
            raise ValueError(f"micro_radius_m {self.micro_radius_m} not in {MICRO_RADII_M}")
        if self.users_per_micro != 0 and self.users_per_micro not in USERS_PER_MICRO:
            raise ValueError(
                f"users_per_micro {self.users_per_micro} not in {USERS_PER_MICRO}"
            )
        if self.displacement_m not in DISPLACEMENTS_M:
            raise ValueError(f"displacement_m {self.displacement_m} not in {DISPLACEMENTS_M}")
        if (self.n_uniform, self.n_macro_clusters, self.n_micro_per_macro) != (40, 3, 3):
            raise ValueError("fixed counts must be n_uniform=40, 3 macro, 3 micro")


def enumerate_configs() -> list[DropConfig]:
    """All 180 sweep points: 3 radii x 10 cluster sizes x 6 displacements."""
    return [
        DropConfig(micro_radius_m=r, users_per_micro=u, displacement_m=disp)
        for r in MICRO_RADII_M
        for u in USERS_PER_MICRO
        for disp in DISPLACEMENTS_M
    ]


@dataclass
class UeDrop:
    """One realized UE distribution.

    ``positions``/``serving_cell`` hold the inner-frame population (40
    uniform UEs plus the clustered ones); the ring load is kept separate
    so the inner count law stays exact. ``cluster_of`` is -1 for uniform
    UEs and the micro-cluster index otherwise (None for drops loaded from
    CSV, where cluster lineage is not persisted).
    """

    drop_id: str
    config: DropConfig
    positions: np.ndarray  # (n, 2)
    serving_cell: np.ndarray  # (n,)
    ring_positions: np.ndarray  # (r, 2)
    ring_serving: np.ndarray  # (r,)
    cluster_of: np.ndarray | None = None
    micro_centers: np.ndarray | None = None
    seed: int | None = None

    @property
    def n_inner(self) -> int:
        return len(self.positions)

    @property
    def all_positions(self) -> np.ndarray:
        return np.vstack([self.positions, self.ring_positions])

    @property
    def all_serving(self) -> np.ndarray:
        return np.concatenate([self.serving_cell, self.ring_serving])

    @property
    def all_ue_ids(self) -> np.ndarray:
        return np.concatenate(
            [
                np.arange(self.n_inner),
                RING_UE_ID_BASE + np.arange(len(self.ring_positions)),
            ]
        )

    def attached(self, cell_id: int) -> np.ndarray:
        """Global indices (rows of all_positions) served by cell_id."""
        return np.flatnonzero(self.all_serving == cell_id)


def _uniform_in_box(rng: np.random.Generator, box, n: int) -> np.ndarray:
    xmin, xmax, ymin, ymax = box
    return np.column_stack(
        [rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)]
    )


def _in_box(points: np.ndarray, box) -> np.ndarray:
    xmin, xmax, ymin, ymax = box
    return (
        (points[:, 0] >= xmin)
        & (points[:, 0] <= xmax)
        & (points[:, 1] >= ymin)
        & (points[:, 1] <= ymax)
    )


def generate_drop(
    config: DropConfig,
    grid: GridLayout,
    seed: int,
    params: ChannelParams = ChannelParams(),
    drop_id: str | None = None,
) -> UeDrop:
    """Realize one Thomas-cluster UE drop, deterministically from seed.

    40 UEs uniform over the inner frame; per inner site, three micro
    cluster centers at the configured displacement and uniform angles;
    per center, Gaussian scatter with sigma = micro_radius / 2 (points
    falling outside the frame are redrawn). Serving cells by strongest
    received reference power. A separate 40-UE uniform load over the ring
    annulus keeps the interferer ring realistically occupied.
    """
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))

    uniform = _uniform_in_box(rng, grid.frame, config.n_uniform)

    centers = []
    for si in range(config.n_macro_clusters):
        site = grid.sites[si]
        for _ in range(config.n_micro_per_macro):
            while True:
                ang = rng.uniform(0.0, 2.0 * np.pi)
                c = site + config.displacement_m * np.array([np.cos(ang), np.sin(ang)])
                if _in_box(c[None, :], grid.frame)[0]:
                    break
            centers.append(c)
    centers = np.array(centers) if centers else np.zeros((0, 2))

    sigma = config.micro_radius_m / 2.0
    clustered = []
    cluster_of = []
    for ci, c in enumerate(centers):
        pts = c + rng.normal(0.0, sigma, (config.users_per_micro, 2))
        bad = ~_in_box(pts, grid.frame)
        while bad.any():
            pts[bad] = c + rng.normal(0.0, sigma, (int(bad.sum()), 2))
            bad = ~_in_box(pts, grid.frame)
        clustered.append(pts)
        cluster_of.extend([ci] * config.users_per_micro)
    clustered = np.vstack(clustered) if clustered else np.zeros((0, 2))

    positions = np.vstack([uniform, clustered])
    cluster_ix = np.concatenate(
        [np.full(len(uniform), -1, dtype=int), np.array(cluster_of, dtype=int)]
    )

    # ring load: uniform over the ring box excluding the inner frame
    ring_pts = np.zeros((0, 2))
    while len(ring_pts) < RING_UE_COUNT:
        cand = _uniform_in_box(rng, grid.ring_box, 4 * RING_UE_COUNT)
        cand = cand[~_in_box(cand, grid.frame)]
        ring_pts = np.vstack([ring_pts, cand])
    ring_pts = ring_pts[:RING_UE_COUNT]

    gains = gain_matrix_db(
        positions, grid.site_xy_per_sector, grid.boresights, params
    )
    serving = gains.argmax(axis=1).astype(int)

    ring_ids = np.array(grid.ring_cell_ids)
    ring_gains = gain_matrix_db(
        ring_pts, grid.site_xy_per_sector, grid.boresights, params
    )[:, ring_ids]
    ring_serving = ring_ids[ring_gains.argmax(axis=1)].astype(int)

    return UeDrop(
        drop_id=drop_id if drop_id is not None else f"seed{int(seed)}",
        config=config,
        positions=positions,
        serving_cell=serving,
        ring_positions=ring_pts,
        ring_serving=ring_serving,
        cluster_of=cluster_ix,
        micro_centers=centers,
        seed=int(seed),
    )


def save_drop(drop: UeDrop, path: str | Path) -> None:
    """Write the drop CSV (and a JSON sidecar with config and seed)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["drop_id", "ue_id", "x_m", "y_m", "serving_cell"])
        for i, (pos, srv) in enumerate(zip(drop.positions, drop.serving_cell)):
            w.writerow([drop.drop_id, i, repr(float(pos[0])), repr(float(pos[1])), int(srv)])
        for i, (pos, srv) in enumerate(zip(drop.ring_positions, drop.ring_serving)):
            w.writerow(
                [drop.drop_id, RING_UE_ID_BASE + i, repr(float(pos[0])), repr(float(pos[1])), int(srv)]
            )
    sidecar = {
        "drop_id": drop.drop_id,
        "seed": drop.seed,
        "micro_radius_m": drop.config.micro_radius_m,
        "users_per_micro": drop.config.users_per_micro,
        "displacement_m": drop.config.displacement_m,
        "n_uniform": drop.config.n_uniform,
        "n_macro_clusters": drop.config.n_macro_clusters,
        "n_micro_per_macro": drop.config.n_micro_per_macro,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1) + "\n")


def load_drop(path: str | Path) -> UeDrop:
    """Read a drop CSV written by save_drop."""
    path = Path(path)
    inner_pos, inner_srv, ring_pos, ring_srv = [], [], [], []
    drop_id = None
    with path.open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["drop_id", "ue_id", "x_m", "y_m", "serving_cell"]:
            raise ValueError(f"{path}: unexpected drop header {header}")
        for row in r:
            drop_id = row[0]
            ue_id = int(row[1])
            rec = ([float(row[2]), float(row[3])], int(row[4]))
            if ue_id >= RING_UE_ID_BASE:
                ring_pos.append(rec[0])
                ring_srv.append(rec[1])
            else:
                inner_pos.append(rec[0])
                inner_srv.append(rec[1])
    sidecar_path = path.with_suffix(".json")
    config = DropConfig(micro_radius_m=75.0, users_per_micro=0, displacement_m=50.0)
    seed = None
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text())
        config = DropConfig(
            micro_radius_m=float(meta["micro_radius_m"]),
            users_per_micro=int(meta["users_per_micro"]),
            displacement_m=float(meta["displacement_m"]),
            n_uniform=int(meta["n_uniform"]),
            n_macro_clusters=int(meta["n_macro_clusters"]),
            n_micro_per_macro=int(meta["n_micro_per_macro"]),
        )
        seed = meta.get("seed")
        drop_id = meta.get("drop_id", drop_id)
    return UeDrop(
        drop_id=drop_id or path.stem,
        config=config,
        positions=np.array(inner_pos) if inner_pos else np.zeros((0, 2)),
        serving_cell=np.array(inner_srv, dtype=int),
        ring_positions=np.array(ring_pos) if ring_pos else np.zeros((0, 2)),
        ring_serving=np.array(ring_srv, dtype=int),
        seed=seed,
    )


def load_drops(directory: str | Path) -> list[UeDrop]:
    """All drop CSVs in a directory, sorted by file name."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.csv"))
    if not paths:
        raise ValueError(f"no drop CSVs found in {directory}")
    return [load_drop(p) for p in paths]
