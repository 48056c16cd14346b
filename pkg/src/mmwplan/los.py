"""Line-of-sight analysis between candidate sites.

A pair of sites has LoS at a tested height when the number of cloud points
near the connecting 3D segment stays under a threshold.  Candidate heights
let links clear short obstacles; an optional building-polygon prefilter cuts
the pair list down before the point test runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .cloud import HashedGrid


@dataclass
class LosParams:
    """Search and clearance settings for the LoS test.

    heights is the list of absolute z values to test (each height is applied
    to both ends of the segment); None means test each endpoint's own mount
    elevation.  Points within endpoint_exclusion of either segment end are
    ignored so a pole is never blocked by its own points.
    """

    max_dist: float = 300.0
    clearance_radius: float = 0.3
    obstruction_threshold: int = 3
    heights: list | None = None
    min_dist: float = 5.0
    endpoint_exclusion: float = 1.0

    def validate(self):
        if not (self.max_dist > self.min_dist > 0):
            raise ValueError("need max_dist > min_dist > 0")
        if self.clearance_radius <= 0:
            raise ValueError("clearance_radius must be positive")
        if self.obstruction_threshold < 0:
            raise ValueError("obstruction threshold must be >= 0")
        return self


@dataclass
class LosEdge:
    """An unordered site pair with line of sight; ids stored sorted."""

    site_a: str
    site_b: str
    distance: float
    obstruction_count: int
    height_used: float


def segment_obstructions(
    grid: HashedGrid,
    p,
    q,
    clearance_radius: float,
    endpoint_exclusion: float = 1.0,
) -> int:
    """Count cloud points within clearance_radius of segment p-q (3D).

    Points within endpoint_exclusion (3D) of either endpoint are excluded.
    Only grid cells near the segment's xy projection are touched.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.allclose(p, q):
        raise ValueError("segment endpoints must differ")
    cand = _corridor_indices(grid, p[:2], q[:2], clearance_radius)
    if len(cand) == 0:
        return 0
    pts = grid.cloud.xyz[cand]
    seg = q - p
    denom = float(seg @ seg)
    t = np.clip((pts - p) @ seg / denom, 0.0, 1.0)
    closest = p + t[:, None] * seg
    d2 = np.einsum("ij,ij->i", pts - closest, pts - closest)
    near = d2 <= clearance_radius * clearance_radius
    if endpoint_exclusion > 0:
        ex2 = endpoint_exclusion * endpoint_exclusion
        dp = np.einsum("ij,ij->i", pts - p, pts - p)
        dq = np.einsum("ij,ij->i", pts - q, pts - q)
        near &= (dp > ex2) & (dq > ex2)
    return int(np.count_nonzero(near))


def _corridor_indices(grid: HashedGrid, a2, b2, clearance: float) -> np.ndarray:
    """Indices of points in cells near the 2D segment a2-b2.

    Cells are prefiltered by center distance to the segment with a
    half-diagonal margin, a tight superset of footprint-in-corridor.
    """
    lo = np.floor(np.minimum(a2, b2) - clearance).astype(int)
    hi = np.floor(np.maximum(a2, b2) + clearance).astype(int)
    ixs = np.arange(lo[0], hi[0] + 1)
    iys = np.arange(lo[1], hi[1] + 1)
    gx, gy = np.meshgrid(ixs, iys, indexing="ij")
    centers = np.stack([gx.ravel() + 0.5, gy.ravel() + 0.5], axis=1)
    seg = np.asarray(b2, dtype=np.float64) - np.asarray(a2, dtype=np.float64)
    denom = float(seg @ seg)
    if denom == 0.0:
        d = np.linalg.norm(centers - a2, axis=1)
    else:
        t = np.clip((centers - a2) @ seg / denom, 0.0, 1.0)
        d = np.linalg.norm(centers - (a2 + t[:, None] * seg), axis=1)
    margin = clearance + math.sqrt(0.5)
    keep = d <= margin
    chunks = []
    for ix, iy in zip(gx.ravel()[keep], gy.ravel()[keep]):
        cell = grid.cells.get((int(ix), int(iy)))
        if cell is not None:
            chunks.append(cell.indices)
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)


def line_of_sight(grid: HashedGrid, a, b, params: LosParams = None):
    """LoS verdict for one site pair, or None.

    Tests each candidate height (both segment ends at the same z) and keeps
    the height with the fewest obstructions, ties to the lower height, so the
    result is symmetric in (a, b).  Pairs outside (min_dist, max_dist] are
    never linked.
    """
    params = (params or LosParams()).validate()
    dist = math.hypot(a.x - b.x, a.y - b.y)
    if not (params.min_dist < dist <= params.max_dist):
        return None
    if params.heights:
        heights = list(dict.fromkeys(params.heights))
    else:
        heights = sorted({a.mount_z, b.mount_z})
    best = None
    for h in heights:
        count = segment_obstructions(
            grid,
            (a.x, a.y, h),
            (b.x, b.y, h),
            params.clearance_radius,
            params.endpoint_exclusion,
        )
        if best is None or (count, h) < best:
            best = (count, h)
    count, height = best
    if count > params.obstruction_threshold:
        return None
    sa, sb = sorted([a.id, b.id])
    return LosEdge(site_a=sa, site_b=sb, distance=dist, obstruction_count=count, height_used=height)


def all_los(grid: HashedGrid, sites, params: LosParams = None) -> list:
    """Evaluate every unordered site pair within max_dist (2D).

    Candidate pairs come from a coarse spatial hash over the sites, not an
    all-pairs scan; output is sorted by (site_a, site_b).
    """
    params = (params or LosParams()).validate()
    edges = []
    for ia, ib in candidate_pairs(sites, params.max_dist):
        edge = line_of_sight(grid, sites[ia], sites[ib], params)
        if edge is not None:
            edges.append(edge)
    edges.sort(key=lambda e: (e.site_a, e.site_b))
    return edges


def candidate_pairs(sites, max_dist: float) -> list:
    """Index pairs of sites with 2D distance <= max_dist, via bucket hashing."""
    buckets = {}
    for i, s in enumerate(sites):
        key = (int(math.floor(s.x / max_dist)), int(math.floor(s.y / max_dist)))
        buckets.setdefault(key, []).append(i)
    pairs = []
    for (kx, ky), members in buckets.items():
        for dx in (0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy < 0:
                    continue
                other = buckets.get((kx + dx, ky + dy))
                if other is None:
                    continue
                for i in members:
                    for j in other:
                        if (dx, dy) == (0, 0) and j <= i:
                            continue
                        si, sj = sites[i], sites[j]
                        if math.hypot(si.x - sj.x, si.y - sj.y) <= max_dist:
                            pairs.append((min(i, j), max(i, j)))
    pairs = sorted(set(pairs))
    return pairs


def polygon_prefilter(sites, buildings, params: LosParams = None) -> list:
    """Site-id pairs within range whose 2D segment crosses no building.

    buildings is a list of polygon vertex arrays.  Self-intersecting
    polygons are rejected.
    """
    from shapely.geometry import LineString, Polygon

    params = (params or LosParams()).validate()
    polys = []
    for k, coords in enumerate(buildings):
        poly = Polygon(np.asarray(coords, dtype=np.float64))
        if not poly.is_valid:
            raise ValueError(f"building polygon {k} is invalid (self-intersecting?)")
        polys.append(poly)
    out = []
    for ia, ib in candidate_pairs(sites, params.max_dist):
        a, b = sites[ia], sites[ib]
        seg = LineString([(a.x, a.y), (b.x, b.y)])
        if any(seg.intersects(poly) for poly in polys):
            continue
        out.append(tuple(sorted([a.id, b.id])))
    return sorted(out)


def save_los(edges, path) -> None:
    payload = [
        {
            "a": e.site_a,
            "b": e.site_b,
            "distance_m": e.distance,
            "obstructions": e.obstruction_count,
            "height_m": e.height_used,
        }
        for e in edges
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_los(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [
        LosEdge(
            site_a=str(e["a"]),
            site_b=str(e["b"]),
            distance=float(e["distance_m"]),
            obstruction_count=int(e["obstructions"]),
            height_used=float(e["height_m"]),
        )
        for e in data
    ]
