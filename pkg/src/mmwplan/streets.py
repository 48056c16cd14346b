"""Street-proximity labeling and ground removal.

Grid cells near mapped street ways are marked close; everything else is far
and dropped together with ground points before pole detection.  The original
grid stays untouched so later stages can still query ground elevations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cloud import GridCell, HashedGrid, PointClass


@dataclass
class StreetWay:
    """An ordered polyline of projected (x, y) vertices representing a street."""

    id: str
    nodes: np.ndarray  # (K, 2)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2 or len(self.nodes) < 2:
            raise ValueError(f"way {self.id!r} needs at least 2 (x, y) vertices")


def load_ways(path) -> list:
    """Read the ways file: JSON array of {"id": str, "nodes": [[x, y], ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [StreetWay(id=str(w["id"]), nodes=w["nodes"]) for w in data]


def point_segment_distance_2d(points: np.ndarray, a, b) -> np.ndarray:
    """Distance from each 2D point to segment a-b, vectorized."""
    points = np.atleast_2d(points)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def osm_filter(grid: HashedGrid, ways, max_dist: float = 20.0) -> HashedGrid:
    """Mark each cell close iff its center is within max_dist of some way.

    Labels are written onto the grid's cells in place and the grid returned.
    All points in a cell follow their cell's label.
    """
    if max_dist <= 0:
        raise ValueError("max_dist must be positive")
    keys = grid.sorted_keys()
    if not keys:
        return grid
    centers = np.array([(ix + 0.5, iy + 0.5) for ix, iy in keys])
    close = np.zeros(len(keys), dtype=bool)
    for way in ways:
        for a, b in zip(way.nodes[:-1], way.nodes[1:]):
            todo = ~close
            if not np.any(todo):
                break
            d = point_segment_distance_2d(centers[todo], a, b)
            close[np.flatnonzero(todo)[d <= max_dist]] = True
    for key, is_close in zip(keys, close):
        grid.cells[key].proximity = "close" if is_close else "far"
    return grid


def remove_ground_and_far(grid: HashedGrid) -> HashedGrid:
    """Working copy of the grid without ground points and without far cells.

    The input grid must be classified and proximity-labeled; it is left
    unmodified so ground elevations stay queryable.  The returned grid
    shares the input's cloud and holds filtered per-cell index arrays.
    """
    classes = grid.cloud.classes
    if not grid.classified:
        raise RuntimeError("grid is unclassified; run classify_cloud first")
    out = HashedGrid(cloud=grid.cloud, cell_size=grid.cell_size, classified=True)
    for key, cell in grid.cells.items():
        if cell.proximity == "far":
            continue
        kept = cell.indices[classes[cell.indices] != PointClass.PLANAR_GROUND]
        if len(kept):
            out.cells[key] = GridCell(ix=cell.ix, iy=cell.iy, indices=kept, proximity=cell.proximity)
    return out
