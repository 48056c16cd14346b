"""Neighborhood-PCA point classification.

Each point's local neighborhood is reduced to three covariance eigenvalues;
linear / planar / volumetric features derived from them, plus the vertical
alignment of the dominant eigenvectors, decide the point class.  Wires get a
stricter linearity feature and a horizontality test, with a small-radius
re-check for the parallel-wires case that looks planar at the base radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import HashedGrid, PointClass


@dataclass
class PcaParams:
    """Classifier weights, radii and angle thresholds.

    alpha/beta weight the linear/volumetric features; alpha_wire is the much
    stricter linearity weight used for wires.  r is the PCA neighborhood
    radius, r_wire the small re-check radius for planar neighborhoods, and
    r_pca the sampling radius: one representative point is classified per
    r_pca-ball and its label propagated (0 disables sampling).  theta_t and
    theta_w are cosine thresholds: dominant directions steeper than theta_t
    count as vertical (stems, ground normals), flatter than theta_w as
    horizontal (wires).
    """

    alpha: float = 3.0
    beta: float = 2.0
    alpha_wire: float = 20.0
    r: float = 1.0
    r_wire: float = 0.3
    r_pca: float = 0.5
    theta_t: float = 0.9
    theta_w: float = 0.3

    def validate(self):
        if min(self.alpha, self.beta, self.alpha_wire, self.r, self.r_wire) <= 0:
            raise ValueError("weights and radii must be positive")
        if self.alpha_wire <= self.alpha:
            raise ValueError("alpha_wire must exceed alpha")
        if self.r_wire >= self.r:
            raise ValueError("r_wire must be smaller than r")
        if self.r_pca < 0:
            raise ValueError("r_pca must be non-negative")
        for t in (self.theta_t, self.theta_w):
            if not 0 < t < 1:
                raise ValueError("cosine thresholds must lie in (0, 1)")
        return self


@dataclass
class PcaResult:
    """Eigen-decomposition of one neighborhood's 3x3 covariance."""

    eigenvalues: np.ndarray  # descending, non-negative
    v1: np.ndarray  # dominant direction, unit
    v3: np.ndarray  # normal direction, unit
    n_neighbors: int


class InsufficientNeighborsError(ValueError):
    """Neighborhood has fewer than 3 points; PCA is undefined."""


def _fix_sign(v: np.ndarray) -> np.ndarray:
    """Deterministic sign: first component above noise level is positive."""
    for comp in v:
        if abs(comp) > 1e-12:
            return v if comp > 0 else -v
    return v


def local_pca(points) -> PcaResult:
    """PCA of a neighborhood given as an (N, 3) coordinate array.

    Population covariance (1/n); eigenvalues sorted descending and clipped
    at zero against roundoff.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("expected an (N, 3) array")
    n = len(pts)
    if n < 3:
        raise InsufficientNeighborsError(f"need >= 3 points, got {n}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / n
    cov = (cov + cov.T) / 2.0
    w, v = np.linalg.eigh(cov)  # ascending
    eigenvalues = np.maximum(w[::-1], 0.0)
    return PcaResult(
        eigenvalues=eigenvalues,
        v1=_fix_sign(v[:, 2].copy()),
        v3=_fix_sign(v[:, 0].copy()),
        n_neighbors=n,
    )


def dimensionality(pca: PcaResult, params: PcaParams):
    """Linear/planar/volumetric features and the argmax dimensionality.

    Returns (d, s1, s2, s3) with d in {1, 2, 3}; ties break toward the
    smaller index.
    """
    l1, l2, l3 = pca.eigenvalues
    s1 = l1 - params.alpha * l2
    s2 = l2 - l3
    s3 = params.beta * l3
    d = 1 + int(np.argmax([s1, s2, s3]))
    return d, s1, s2, s3


# -- batched classification ---------------------------------------------------
#
# Per-point PCA over millions of points is only tractable when neighborhoods
# of a whole grid cell are processed together: one (queries x block) distance
# matrix, masked moment sums, and a stacked eigh call.


def _masked_eigh(mask: np.ndarray, block: np.ndarray, second_moments: np.ndarray):
    """Eigen-decompose the covariance of each row's masked neighborhood.

    mask: (C, K) boolean; block: (K, 3); second_moments: (K, 3, 3) outer
    products of block rows.  Returns (counts, eigenvalues desc (C,3),
    vectors (C,3,3) eigh layout ascending columns).
    """
    m = mask.astype(np.float64)
    counts = mask.sum(axis=1)
    safe = np.maximum(counts, 1)
    sums = m @ block
    means = sums / safe[:, None]
    raw = np.einsum("ck,kab->cab", m, second_moments)
    cov = raw / safe[:, None, None] - np.einsum("ca,cb->cab", means, means)
    cov = (cov + np.transpose(cov, (0, 2, 1))) / 2.0
    w, v = np.linalg.eigh(cov)
    return counts, np.maximum(w[:, ::-1], 0.0), v


def classify_batch(grid: HashedGrid, indices: np.ndarray, params: PcaParams) -> np.ndarray:
    """Class labels for the given point indices, computed cell by cell."""
    xyz = grid.cloud.xyz
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros(len(indices), dtype=np.int8)
    if len(indices) == 0:
        return out
    halo = int(math.ceil(params.r))
    keys = np.floor(xyz[indices, :2]).astype(np.int64)
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    boundaries = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(indices)]))
    for s, e in zip(starts, ends):
        ix, iy = int(sorted_keys[s, 0]), int(sorted_keys[s, 1])
        rows = order[s:e]
        out[rows] = _classify_cell(grid, indices[rows], ix, iy, halo, params)
    return out


def _classify_cell(grid, query_idx, ix, iy, halo, params):
    xyz = grid.cloud.xyz
    block_idx = grid.block_indices(ix, iy, halo=halo)
    labels = np.full(len(query_idx), int(PointClass.UNCLASSIFIED), dtype=np.int8)
    if len(block_idx) < 3:
        return labels
    # shift to the block centroid: moment sums on raw UTM-scale coordinates
    # would cancel away the small eigenvalues
    shift = xyz[block_idx].mean(axis=0)
    block = xyz[block_idx] - shift
    queries = xyz[query_idx] - shift
    diff = queries[:, None, :] - block[None, :, :]
    d2 = np.einsum("cka,cka->ck", diff, diff)
    second = np.einsum("ka,kb->kab", block, block)

    mask = d2 <= params.r * params.r
    counts, eig, vecs = _masked_eigh(mask, block, second)
    l1, l2, l3 = eig[:, 0], eig[:, 1], eig[:, 2]
    s1 = l1 - params.alpha * l2
    s2 = l2 - l3
    s3 = params.beta * l3
    s1_wire = l1 - params.alpha_wire * l2
    d = np.where(s1 >= s2, np.where(s1 >= s3, 1, 3), np.where(s2 >= s3, 2, 3))
    vert1 = np.abs(vecs[:, 2, 2])  # |v1 . z|
    vert3 = np.abs(vecs[:, 2, 0])  # |v3 . z|

    enough = counts >= 3
    linear = enough & (d == 1)
    wire = linear & (s1_wire > s2) & (s1_wire > s3) & (vert1 < params.theta_w)
    stem = linear & ~wire & (vert1 > params.theta_t)
    other_linear = linear & ~wire & ~stem
    planar = enough & (d == 2)
    volumetric = enough & (d == 3)

    labels[wire] = PointClass.WIRE
    labels[stem] = PointClass.LINEAR_STEM
    labels[other_linear] = PointClass.LINEAR_OTHER
    labels[volumetric] = PointClass.VOLUMETRIC

    if np.any(planar):
        # parallel wires can masquerade as a plane at radius r; re-test the
        # tight r_wire neighborhood before settling on a planar label
        rows = np.flatnonzero(planar)
        mask_w = d2[rows] <= params.r_wire * params.r_wire
        counts_w, eig_w, vecs_w = _masked_eigh(mask_w, block, second)
        l1w, l2w, l3w = eig_w[:, 0], eig_w[:, 1], eig_w[:, 2]
        s1w = l1w - params.alpha_wire * l2w
        s2w = l2w - l3w
        s3w = params.beta * l3w
        vert1w = np.abs(vecs_w[:, 2, 2])
        rewired = (counts_w >= 3) & (s1w > s2w) & (s1w > s3w) & (vert1w < params.theta_w)
        ground = ~rewired & (vert3[rows] > params.theta_t)
        planar_other = ~rewired & ~ground
        labels[rows[rewired]] = PointClass.WIRE
        labels[rows[ground]] = PointClass.PLANAR_GROUND
        labels[rows[planar_other]] = PointClass.PLANAR_OTHER
    return labels


def classify_point(grid: HashedGrid, point, params: PcaParams = None) -> PointClass:
    """Classify a single location against the grid's cloud.

    ``point`` is an (x, y, z) triple or an index into the grid's cloud.
    Degenerate neighborhoods (fewer than 3 points within r) come back
    Unclassified rather than raising.
    """
    params = (params or PcaParams()).validate()
    if np.isscalar(point) or isinstance(point, (int, np.integer)):
        idx = int(point)
    else:
        coords = np.asarray(point, dtype=np.float64)
        hits = np.flatnonzero(np.all(np.isclose(grid.cloud.xyz, coords, atol=1e-9), axis=1))
        if len(hits) == 0:
            raise ValueError("point is not part of the grid's cloud")
        idx = int(hits[0])
    label = classify_batch(grid, np.array([idx], dtype=np.int64), params)[0]
    return PointClass(int(label))


def classify_cloud(grid: HashedGrid, params: PcaParams = None) -> HashedGrid:
    """Label every point in the grid's cloud, in place.

    With r_pca > 0, representatives are picked greedily in cell-key order
    (insertion order within a cell); each representative's label is copied
    to the not-yet-covered points within r_pca of it.  An earlier
    representative's label is never overwritten.  With r_pca = 0 every point
    is classified individually.
    """
    params = (params or PcaParams()).validate()
    cloud = grid.cloud
    grid.classified = True
    n = len(cloud)
    if n == 0:
        return grid
    if params.r_pca == 0:
        cloud.classes[:] = classify_batch(grid, np.arange(n, dtype=np.int64), params)
        return grid

    from .cloud import neighbors_within

    assignment = np.full(n, -1, dtype=np.int64)
    reps = []
    xyz = cloud.xyz
    for key in grid.sorted_keys():
        for idx in grid.cells[key].indices:
            if assignment[idx] >= 0:
                continue
            rep_no = len(reps)
            reps.append(idx)
            ball = neighbors_within(grid, xyz[idx], params.r_pca)
            fresh = ball[assignment[ball] < 0]
            assignment[fresh] = rep_no
            assignment[idx] = rep_no
    rep_labels = classify_batch(grid, np.asarray(reps, dtype=np.int64), params)
    cloud.classes[:] = rep_labels[assignment]
    return grid
