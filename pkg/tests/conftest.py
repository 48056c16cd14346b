import numpy as np
import pytest

from mmwplan.classify import PcaParams, classify_cloud
from mmwplan.cloud import PointCloud, build_grid
from mmwplan.streets import osm_filter, remove_ground_and_far
from mmwplan.synth import SceneSpec, generate_scene


def ground_patch(rng, x0, y0, size, spacing=0.1, z=0.0):
    n = int(size / spacing)
    xs = x0 + (np.arange(n) + 0.5) * spacing
    ys = y0 + (np.arange(n) + 0.5) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack(
        [
            gx.ravel() + rng.uniform(-0.02, 0.02, gx.size),
            gy.ravel() + rng.uniform(-0.02, 0.02, gx.size),
            np.full(gx.size, z) + rng.normal(0, 0.01, gx.size),
        ],
        axis=1,
    )
    return pts


def vertical_line(x, y, z0, z1, step=0.05, jitter=0.0, rng=None):
    zs = np.arange(z0, z1, step)
    pts = np.stack([np.full_like(zs, x), np.full_like(zs, y), zs], axis=1)
    if jitter and rng is not None:
        pts[:, :2] += rng.normal(0, jitter, (len(zs), 2))
    return pts


def horizontal_line(x0, x1, y, z, step=0.05, jitter=0.0, rng=None):
    xs = np.arange(x0, x1, step)
    pts = np.stack([xs, np.full_like(xs, y), np.full_like(xs, z)], axis=1)
    if jitter and rng is not None:
        pts[:, 1:] += rng.normal(0, jitter, (len(xs), 2))
    return pts


def ball(rng, cx, cy, cz, radius, n):
    pts = rng.uniform(-1, 1, (n * 3, 3))
    pts = pts[np.einsum("ij,ij->i", pts, pts) <= 1][:n]
    return pts * radius + np.array([cx, cy, cz])


def grid_of(*chunks):
    return build_grid(PointCloud(np.vstack(chunks)))


@pytest.fixture(scope="session")
def city():
    """A mid-size classified, street-filtered city scene shared by tests."""
    scene = generate_scene(SceneSpec(n_poles=8, n_trees=4, n_walls=2, area=90.0, seed=2))
    from mmwplan.cloud import downsample

    cloud = downsample(scene.cloud, 0.10)
    grid = build_grid(cloud)
    classify_cloud(grid, PcaParams())
    osm_filter(grid, scene.ways, 20.0)
    working = remove_ground_and_far(grid)
    return {"scene": scene, "grid": grid, "working": working, "cloud": cloud}
