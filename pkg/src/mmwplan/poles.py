"""Pole detection: stem clustering, ground filtering, component retrieval and
the six-rule accept/reject classification that separates poles from trees,
buildings and other street furniture.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .cloud import HashedGrid, PointClass


@dataclass
class DetectionParams:
    """Clustering radii and the pole acceptance thresholds.

    The six acceptance rules: total height in [min_height, max_height];
    base near local ground (z_min - ground_z within the near-ground window);
    planar and volumetric point ratios capped; stem and overall linear
    ratios floored; the top band must not be dominated by volumetric points
    unless enough wire points are nearby (utility poles); and re-clustering
    the bottom band must stay under the footprint area cap.
    """

    stem_link_dist: float = 0.5
    component_dist: float = 2.0
    object_link_dist: float = 1.0
    min_height: float = 5.0
    max_height: float = 30.0
    near_ground_low: float = -1.0
    near_ground_high: float = 8.0
    max_planar_ratio: float = 0.60
    max_volumetric_ratio: float = 0.75
    min_stem_ratio: float = 0.10
    min_linear_ratio: float = 0.20
    top_fraction: float = 0.40
    top_volumetric_cap: float = 0.50
    wire_rescue_count: int = 25
    wire_search_dist: float = 6.0
    bottom_fraction: float = 0.20
    bottom_area_cap: float = 2.0
    min_stem_height: float = 2.0
    mount_height: float = 8.0


@dataclass
class StemCandidate:
    """A connected blob of vertical-linear points, possibly a pole stem."""

    indices: np.ndarray
    centroid_xy: np.ndarray
    z_min: float
    z_max: float
    ground_z: float | None = None


@dataclass
class PoleCluster:
    """A standalone object recovered around stem candidates."""

    indices: np.ndarray
    stem_xy: np.ndarray
    z_min: float
    z_max: float
    ground_z: float
    counts: dict = field(default_factory=dict)

    @property
    def height(self) -> float:
        return self.z_max - self.z_min


@dataclass
class PoleVerdict:
    accept: bool
    rules: dict


@dataclass
class SiteCandidate:
    """A detected antenna site: pole location plus a usable mount height."""

    id: str
    x: float
    y: float
    mount_z: float
    kind: str = "DN"
    rules: dict | None = None


def single_link_components(coords: np.ndarray, link_dist: float) -> list:
    """Partition points into connected components under distance <= link_dist.

    Returns a list of index arrays (into ``coords``), ordered by each
    component's smallest member index.
    """
    n = len(coords)
    if n == 0:
        return []
    pairs = cKDTree(coords).query_pairs(link_dist, output_type="ndarray")
    if len(pairs):
        adj = sparse.coo_matrix(
            (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
        )
        _, labels = sparse.csgraph.connected_components(adj, directed=False)
    else:
        labels = np.arange(n)
    components = {}
    for i, lab in enumerate(labels):
        components.setdefault(lab, []).append(i)
    groups = [np.asarray(v, dtype=np.int64) for v in components.values()]
    groups.sort(key=lambda g: int(g[0]))
    return groups


def _gather_2d(grid: HashedGrid, cx: float, cy: float, radius: float) -> np.ndarray:
    """Point indices within a 2D radius of (cx, cy), via the cell hash."""
    ix0, ix1 = int(math.floor(cx - radius)), int(math.floor(cx + radius))
    iy0, iy1 = int(math.floor(cy - radius)), int(math.floor(cy + radius))
    chunks = []
    for ix in range(ix0, ix1 + 1):
        for iy in range(iy0, iy1 + 1):
            cell = grid.cells.get((ix, iy))
            if cell is not None:
                chunks.append(cell.indices)
    if not chunks:
        return np.empty(0, dtype=np.int64)
    cand = np.concatenate(chunks)
    d = grid.cloud.xyz[cand, :2] - np.array([cx, cy])
    return cand[np.einsum("ij,ij->i", d, d) <= radius * radius]


def cluster_stems(grid: HashedGrid, params: DetectionParams) -> list:
    """Group stem-classified points into candidates by 2D proximity."""
    stem_idx = []
    for key in grid.sorted_keys():
        cell = grid.cells[key]
        labels = grid.cloud.classes[cell.indices]
        stem_idx.append(cell.indices[labels == PointClass.LINEAR_STEM])
    stem_idx = np.concatenate(stem_idx) if stem_idx else np.empty(0, dtype=np.int64)
    if len(stem_idx) == 0:
        return []
    xy = grid.cloud.xyz[stem_idx, :2]
    out = []
    for group in single_link_components(xy, params.stem_link_dist):
        idx = stem_idx[group]
        z = grid.cloud.xyz[idx, 2]
        out.append(
            StemCandidate(
                indices=idx,
                centroid_xy=grid.cloud.xyz[idx, :2].mean(axis=0),
                z_min=float(z.min()),
                z_max=float(z.max()),
            )
        )
    return out


def local_ground_z(full_grid: HashedGrid, x: float, y: float) -> float | None:
    """Median elevation of ground points in the 3x3 cell block around (x, y)."""
    block = full_grid.block_indices(int(math.floor(x)), int(math.floor(y)), halo=1)
    if len(block) == 0:
        return None
    ground = block[full_grid.cloud.classes[block] == PointClass.PLANAR_GROUND]
    if len(ground) == 0:
        return None
    return float(np.median(full_grid.cloud.xyz[ground, 2]))


def filter_stems(candidates, full_grid: HashedGrid, params: DetectionParams) -> list:
    """Keep stem candidates with a plausible vertical extent near local ground.

    Ground elevation comes from the pre-removal grid; candidates with no
    ground reference in their 3x3 cell block are rejected.
    """
    kept = []
    for cand in candidates:
        if cand.z_max - cand.z_min < params.min_stem_height:
            continue
        ground = local_ground_z(full_grid, cand.centroid_xy[0], cand.centroid_xy[1])
        if ground is None:
            continue
        dz = cand.z_min - ground
        if dz < params.near_ground_low or dz > params.near_ground_high:
            continue
        cand.ground_z = ground
        kept.append(cand)
    return kept


def retrieve_components(grid: HashedGrid, stems, params: DetectionParams) -> np.ndarray:
    """All working-grid point indices within component_dist (2D) of any stem."""
    chunks = [
        _gather_2d(grid, s.centroid_xy[0], s.centroid_xy[1], params.component_dist)
        for s in stems
    ]
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(chunks))


def cluster_objects(point_indices: np.ndarray, grid: HashedGrid, stems, params: DetectionParams) -> list:
    """Group retrieved points into standalone objects by 3D proximity.

    Wire points are dropped first: they would chain separate poles into one
    cluster and they are not part of the pole itself.  Each cluster is
    matched back to the nearest filtered stem for its representative
    location and ground elevation.
    """
    point_indices = np.asarray(point_indices, dtype=np.int64)
    labels = grid.cloud.classes[point_indices]
    point_indices = point_indices[labels != PointClass.WIRE]
    if len(point_indices) == 0 or not stems:
        return []
    xyz = grid.cloud.xyz[point_indices]
    stem_xy = np.array([s.centroid_xy for s in stems])
    clusters = []
    for group in single_link_components(xyz, params.object_link_dist):
        idx = point_indices[group]
        pts = grid.cloud.xyz[idx]
        centroid = pts[:, :2].mean(axis=0)
        nearest = int(np.argmin(np.einsum("ij,ij->i", stem_xy - centroid, stem_xy - centroid)))
        cls = grid.cloud.classes[idx]
        counts = {c: int(np.count_nonzero(cls == c)) for c in PointClass}
        clusters.append(
            PoleCluster(
                indices=idx,
                stem_xy=stem_xy[nearest].copy(),
                z_min=float(pts[:, 2].min()),
                z_max=float(pts[:, 2].max()),
                ground_z=stems[nearest].ground_z,
                counts=counts,
            )
        )
    return clusters


def _classified_total(counts: dict) -> int:
    return sum(counts.get(c, 0) for c in PointClass if c != PointClass.UNCLASSIFIED)


def classify_pole(cluster: PoleCluster, grid: HashedGrid, params: DetectionParams) -> PoleVerdict:
    """Apply the six acceptance rules; returns per-rule verdicts for diagnostics."""
    xyz = grid.cloud.xyz[cluster.indices]
    cls = grid.cloud.classes[cluster.indices]
    h = cluster.height
    n = _classified_total(cluster.counts)
    n_stem = cluster.counts.get(PointClass.LINEAR_STEM, 0)
    n_linear = n_stem + cluster.counts.get(PointClass.WIRE, 0) + cluster.counts.get(PointClass.LINEAR_OTHER, 0)
    n_planar = cluster.counts.get(PointClass.PLANAR_GROUND, 0) + cluster.counts.get(PointClass.PLANAR_OTHER, 0)
    n_vol = cluster.counts.get(PointClass.VOLUMETRIC, 0)

    rules = {}
    rules["height"] = params.min_height <= h <= params.max_height
    dz = cluster.z_min - cluster.ground_z
    rules["near_ground"] = params.near_ground_low <= dz <= params.near_ground_high
    if n == 0:
        rules["planar_volumetric_cap"] = False
        rules["stem_linear_floor"] = False
    else:
        rules["planar_volumetric_cap"] = (
            n_planar / n <= params.max_planar_ratio and n_vol / n <= params.max_volumetric_ratio
        )
        rules["stem_linear_floor"] = (
            n_stem / n >= params.min_stem_ratio and n_linear / n >= params.min_linear_ratio
        )

    top_band = cls[xyz[:, 2] >= cluster.z_max - params.top_fraction * h]
    top_n = int(np.count_nonzero(top_band != PointClass.UNCLASSIFIED))
    top_vol = int(np.count_nonzero(top_band == PointClass.VOLUMETRIC))
    top_ok = top_n == 0 or top_vol / top_n < params.top_volumetric_cap
    if not top_ok:
        nearby_wires = count_nearby_wires(grid, cluster, params)
        top_ok = nearby_wires >= params.wire_rescue_count
    rules["top_volumetric"] = top_ok

    bottom_mask = xyz[:, 2] <= cluster.z_min + params.bottom_fraction * h
    area = 0.0
    if np.any(bottom_mask):
        base = xyz[bottom_mask]
        for group in single_link_components(base, params.object_link_dist):
            spans = base[group].max(axis=0) - base[group].min(axis=0)
            area += float(spans[0] * spans[1])
    rules["bottom_area"] = area < params.bottom_area_cap

    return PoleVerdict(accept=all(rules.values()), rules=rules)


def count_nearby_wires(grid: HashedGrid, cluster: PoleCluster, params: DetectionParams) -> int:
    """Wire points within wire_search_dist (2D) of the cluster's stem location."""
    cand = _gather_2d(grid, cluster.stem_xy[0], cluster.stem_xy[1], params.wire_search_dist)
    return int(np.count_nonzero(grid.cloud.classes[cand] == PointClass.WIRE))


def detect_poles(grid: HashedGrid, full_grid: HashedGrid, params: DetectionParams = None) -> list:
    """Full detection pipeline on a classified, street-filtered grid.

    Returns accepted clusters as DN site candidates, ordered by (x, y);
    the mount elevation is the pole top capped at ground + mount_height.
    """
    params = params or DetectionParams()
    stems = cluster_stems(grid, params)
    stems = filter_stems(stems, full_grid, params)
    retrieved = retrieve_components(grid, stems, params)
    clusters = cluster_objects(retrieved, grid, stems, params)
    accepted = []
    for cluster in clusters:
        verdict = classify_pole(cluster, grid, params)
        if verdict.accept:
            accepted.append((cluster, verdict))
    accepted.sort(key=lambda cv: (cv[0].stem_xy[0], cv[0].stem_xy[1]))
    sites = []
    for i, (cluster, verdict) in enumerate(accepted, start=1):
        sites.append(
            SiteCandidate(
                id=f"dn-{i:03d}",
                x=float(cluster.stem_xy[0]),
                y=float(cluster.stem_xy[1]),
                mount_z=float(min(cluster.z_max, cluster.ground_z + params.mount_height)),
                kind="DN",
                rules={k: bool(v) for k, v in verdict.rules.items()},
            )
        )
    return sites


def save_sites(sites, path) -> None:
    payload = [
        {"id": s.id, "x": s.x, "y": s.y, "mount_z": s.mount_z, "kind": s.kind, "rules": s.rules}
        for s in sites
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_sites(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [
        SiteCandidate(
            id=str(s["id"]),
            x=float(s["x"]),
            y=float(s["y"]),
            mount_z=float(s["mount_z"]),
            kind=str(s.get("kind", "DN")),
            rules=s.get("rules"),
        )
        for s in data
    ]
