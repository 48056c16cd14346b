"""Point cloud container, plain-text codec, downsampling and the 1 m grid index.

Coordinates are assumed to be already projected to a planar, meter-based
system (UTM or similar).  Elevation z is carried along but never hashed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit, typed, types as _nbtypes

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


class PointClass(enum.IntEnum):
    """Per-point dimensionality label assigned by the PCA classifier."""

    UNCLASSIFIED = 0
    LINEAR_STEM = 1
    WIRE = 2
    LINEAR_OTHER = 3
    PLANAR_GROUND = 4
    PLANAR_OTHER = 5
    VOLUMETRIC = 6


CLASS_TOKENS = {
    PointClass.UNCLASSIFIED: "unclassified",
    PointClass.LINEAR_STEM: "linear-stem",
    PointClass.WIRE: "wire",
    PointClass.LINEAR_OTHER: "linear-other",
    PointClass.PLANAR_GROUND: "planar-ground",
    PointClass.PLANAR_OTHER: "planar-other",
    PointClass.VOLUMETRIC: "volumetric",
}
TOKEN_CLASSES = {v: k for k, v in CLASS_TOKENS.items()}

LINEAR_CLASSES = (PointClass.LINEAR_STEM, PointClass.WIRE, PointClass.LINEAR_OTHER)


class CloudParseError(ValueError):
    """Raised when a cloud text file contains a malformed line."""


class PointCloud:
    """A set of 3D points with optional per-point class labels.

    Points live in ``xyz``, an (N, 3) float64 array; ``classes`` is an (N,)
    int8 array of :class:`PointClass` values (UNCLASSIFIED by default).
    The container is treated as immutable once a grid has been built on it,
    except for in-place class label updates performed by the classifier.
    """

    __slots__ = ("xyz", "classes")

    def __init__(self, xyz, classes=None):
        xyz = np.asarray(xyz, dtype=np.float64)
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"expected (N, 3) coordinates, got shape {xyz.shape}")
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        self.xyz = xyz
        if classes is None:
            self.classes = np.zeros(len(xyz), dtype=np.int8)
        else:
            self.classes = np.asarray(classes, dtype=np.int8)
            if self.classes.shape != (len(xyz),):
                raise ValueError("classes must be one label per point")

    def __len__(self):
        return len(self.xyz)

    def subset(self, indices) -> "PointCloud":
        """New cloud containing the given points, in the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        return PointCloud(self.xyz[indices], self.classes[indices])


@dataclass
class GridCell:
    """One 1m-by-1m bucket: indices into the owning cloud, in insertion order."""

    ix: int
    iy: int
    indices: np.ndarray
    proximity: str = "unlabeled"  # "close" | "far" | "unlabeled"

    def class_counts(self, cloud: PointCloud) -> dict:
        labels = cloud.classes[self.indices]
        return {
            cls: int(np.count_nonzero(labels == cls))
            for cls in PointClass
            if np.any(labels == cls)
        }


@dataclass
class HashedGrid:
    """Point indices hashed by the integer part of their (x, y) coordinates.

    z never participates in the hash.  Cell membership is half-open:
    a point belongs to cell ``(floor(x), floor(y))``, so x == 1.0 lands in
    the cell whose lower edge is 1.
    """

    cloud: PointCloud
    cells: dict = field(default_factory=dict)
    cell_size: float = 1.0
    classified: bool = False

    def __len__(self):
        return sum(len(c.indices) for c in self.cells.values())

    def sorted_keys(self):
        return sorted(self.cells.keys())

    def cell_at(self, x: float, y: float):
        return self.cells.get((int(math.floor(x)), int(math.floor(y))))

    def block_indices(self, ix: int, iy: int, halo: int = 1) -> np.ndarray:
        """Concatenated point indices of the (2*halo+1)^2 cell block around (ix, iy)."""
        chunks = []
        for dx in range(-halo, halo + 1):
            for dy in range(-halo, halo + 1):
                cell = self.cells.get((ix + dx, iy + dy))
                if cell is not None:
                    chunks.append(cell.indices)
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)


def load_cloud(path) -> PointCloud:
    """Parse a cloud text file: one "x y z [class]" line per point.

    Lines starting with '#' and blank lines are ignored.  An optional fourth
    column carries a class token written by the labeled export.

    Raises:
        CloudParseError: naming the 1-based line number of the first bad line.
    """
    coords = []
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise CloudParseError(f"{path}: line {lineno}: expected 'x y z [class]', got {line!r}")
            try:
                x, y, z = float(parts[0]), float(parts[1]), float(parts[2])
            except ValueError:
                raise CloudParseError(f"{path}: line {lineno}: non-numeric coordinate in {line!r}") from None
            if len(parts) == 4:
                token = parts[3]
                if token not in TOKEN_CLASSES:
                    raise CloudParseError(f"{path}: line {lineno}: unknown class token {token!r}")
                labels.append(int(TOKEN_CLASSES[token]))
            else:
                labels.append(0)
            coords.append((x, y, z))
    if not coords:
        return PointCloud(np.empty((0, 3)))
    return PointCloud(np.asarray(coords), np.asarray(labels, dtype=np.int8))


def save_cloud(cloud: PointCloud, path, labeled: bool = False) -> None:
    """Write the cloud text format; with ``labeled`` a 4th class-token column."""
    with open(path, "w", encoding="utf-8") as fh:
        if labeled:
            for (x, y, z), cls in zip(cloud.xyz, cloud.classes):
                fh.write(f"{x:.4f} {y:.4f} {z:.4f} {CLASS_TOKENS[PointClass(int(cls))]}\n")
        else:
            for x, y, z in cloud.xyz:
                fh.write(f"{x:.4f} {y:.4f} {z:.4f}\n")


# -- downsampling -------------------------------------------------------------

_VOXEL_BIAS = 1 << 20  # supports coordinates out to +-1e6 cells


def _pack_voxel(ix, iy, iz):
    return ((ix + _VOXEL_BIAS) << 42) | ((iy + _VOXEL_BIAS) << 21) | (iz + _VOXEL_BIAS)


def _greedy_mask_py(xyz: np.ndarray, spacing: float) -> np.ndarray:
    """Reference greedy thinning: keep a point iff no kept point is within spacing."""
    n = len(xyz)
    keep = np.zeros(n, dtype=bool)
    cells = {}  # packed voxel id -> list of kept point indices
    inv = 1.0 / spacing
    sq = spacing * spacing
    X = xyz
    for i in range(n):
        x, y, z = X[i, 0], X[i, 1], X[i, 2]
        ix, iy, iz = int(math.floor(x * inv)), int(math.floor(y * inv)), int(math.floor(z * inv))
        ok = True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = cells.get(_pack_voxel(ix + dx, iy + dy, iz + dz))
                    if not bucket:
                        continue
                    for j in bucket:
                        ddx = X[j, 0] - x
                        ddy = X[j, 1] - y
                        ddz = X[j, 2] - z
                        if ddx * ddx + ddy * ddy + ddz * ddz <= sq:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            keep[i] = True
            cells.setdefault(_pack_voxel(ix, iy, iz), []).append(i)
    return keep


if _HAVE_NUMBA:

    @njit(cache=True)
    def _greedy_mask_nb(xyz, spacing):  # pragma: no cover - exercised via downsample
        n = xyz.shape[0]
        keep = np.zeros(n, dtype=np.bool_)
        # chained per-voxel lists: head[voxel] -> last kept index, nxt[i] -> previous
        head = typed.Dict.empty(key_type=_nbtypes.int64, value_type=_nbtypes.int64)
        nxt = np.full(n, -1, dtype=np.int64)
        inv = 1.0 / spacing
        sq = spacing * spacing
        bias = np.int64(1 << 20)
        for i in range(n):
            x = xyz[i, 0]
            y = xyz[i, 1]
            z = xyz[i, 2]
            ix = np.int64(math.floor(x * inv))
            iy = np.int64(math.floor(y * inv))
            iz = np.int64(math.floor(z * inv))
            ok = True
            for dx in range(-1, 2):
                for dy in range(-1, 2):
                    for dz in range(-1, 2):
                        key = ((ix + dx + bias) << 42) | ((iy + dy + bias) << 21) | (iz + dz + bias)
                        if key in head:
                            j = head[key]
                            while j >= 0:
                                ddx = xyz[j, 0] - x
                                ddy = xyz[j, 1] - y
                                ddz = xyz[j, 2] - z
                                if ddx * ddx + ddy * ddy + ddz * ddz <= sq:
                                    ok = False
                                    break
                                j = nxt[j]
                        if not ok:
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                keep[i] = True
                key = ((ix + bias) << 42) | ((iy + bias) << 21) | (iz + bias)
                if key in head:
                    nxt[i] = head[key]
                head[key] = np.int64(i)
        return keep


def downsample(cloud: PointCloud, min_spacing: float) -> PointCloud:
    """Greedy thinning in input order: kept points are pairwise > min_spacing apart.

    The first point always survives; each later point survives iff its 3D
    distance to every previously kept point exceeds ``min_spacing``.
    Deterministic for a given input order.
    """
    if min_spacing <= 0:
        raise ValueError("min_spacing must be positive")
    if len(cloud) == 0:
        return PointCloud(np.empty((0, 3)))
    if _HAVE_NUMBA and len(cloud) > 20000:
        keep = _greedy_mask_nb(cloud.xyz, float(min_spacing))
    else:
        keep = _greedy_mask_py(cloud.xyz, float(min_spacing))
    return cloud.subset(np.flatnonzero(keep))


# -- the 1 m grid -------------------------------------------------------------


def cell_keys(xyz: np.ndarray) -> np.ndarray:
    """(N, 2) integer cell keys: floor of x and y."""
    return np.floor(xyz[:, :2]).astype(np.int64)


def build_grid(cloud: PointCloud, cell_size: float = 1.0) -> HashedGrid:
    """Bucket every point into the cell keyed by (floor(x), floor(y)).

    Within-cell index order equals input order, which classification relies
    on for deterministic representative selection.
    """
    if cell_size != 1.0:
        raise ValueError("grid cell size is fixed at 1 m")
    grid = HashedGrid(cloud=cloud, cell_size=1.0)
    if len(cloud) == 0:
        return grid
    keys = cell_keys(cloud.xyz)
    order = np.lexsort((keys[:, 1], keys[:, 0]))  # stable: preserves input order per key
    sorted_keys = keys[order]
    boundaries = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(cloud)]))
    for s, e in zip(starts, ends):
        ix, iy = int(sorted_keys[s, 0]), int(sorted_keys[s, 1])
        grid.cells[(ix, iy)] = GridCell(ix=ix, iy=iy, indices=order[s:e].astype(np.int64))
    return grid


def merge_grids(a: HashedGrid, b: HashedGrid) -> HashedGrid:
    """Merge two grids over a concatenated cloud (a's points first).

    Cells with the same key are unioned; counts add.  Proximity labels are
    dropped (re-run the street filter after merging).
    """
    if a.cell_size != b.cell_size:
        raise ValueError("cell size mismatch")
    merged_cloud = PointCloud(
        np.vstack([a.cloud.xyz, b.cloud.xyz]),
        np.concatenate([a.cloud.classes, b.cloud.classes]),
    )
    offset = len(a.cloud)
    merged = HashedGrid(cloud=merged_cloud, cell_size=a.cell_size, classified=a.classified and b.classified)
    for key, cell in a.cells.items():
        merged.cells[key] = GridCell(ix=cell.ix, iy=cell.iy, indices=cell.indices.copy())
    for key, cell in b.cells.items():
        shifted = cell.indices + offset
        existing = merged.cells.get(key)
        if existing is None:
            merged.cells[key] = GridCell(ix=cell.ix, iy=cell.iy, indices=shifted)
        else:
            existing.indices = np.concatenate([existing.indices, shifted])
    return merged


def neighbors_within(grid: HashedGrid, center, radius: float) -> np.ndarray:
    """Indices of all points with 3D distance <= radius from center.

    Only cells whose xy footprint intersects the query disk are touched.
    ``center`` is any (x, y, z) triple.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    cx, cy, cz = float(center[0]), float(center[1]), float(center[2])
    ix0 = int(math.floor(cx - radius))
    ix1 = int(math.floor(cx + radius))
    iy0 = int(math.floor(cy - radius))
    iy1 = int(math.floor(cy + radius))
    chunks = []
    r2 = radius * radius
    for ix in range(ix0, ix1 + 1):
        # nearest x of the cell footprint [ix, ix+1) to cx
        nx = min(max(cx, ix), ix + 1)
        dx2 = (nx - cx) ** 2
        if dx2 > r2:
            continue
        for iy in range(iy0, iy1 + 1):
            ny = min(max(cy, iy), iy + 1)
            if dx2 + (ny - cy) ** 2 > r2:
                continue
            cell = grid.cells.get((ix, iy))
            if cell is not None:
                chunks.append(cell.indices)
    if not chunks:
        return np.empty(0, dtype=np.int64)
    cand = np.concatenate(chunks)
    d = grid.cloud.xyz[cand] - np.array([cx, cy, cz])
    inside = np.einsum("ij,ij->i", d, d) <= r2
    return cand[inside]
