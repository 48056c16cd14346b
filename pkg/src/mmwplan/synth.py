"""Deterministic synthetic street scenes with known ground truth.

Scenes contain a sloped ground plane, street poles (some strung with wires),
trees with volumetric crowns, and building facades -- everything the
detection pipeline must either find or reject.  All randomness flows from a
single seeded generator, so a given spec always produces the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .streets import StreetWay


@dataclass
class SceneSpec:
    n_poles: int = 20
    n_trees: int = 10
    n_walls: int = 5
    area: float = 140.0
    spacing: float = 0.07  # raw sampling spacing before downsampling
    seed: int = 0
    ground: bool = True


@dataclass
class Scene:
    cloud: PointCloud
    truth: dict
    ways: list
    buildings: list = field(default_factory=list)


def _ground_slope(x, y):
    return 0.002 * x + 0.001 * y


def _ground_patch(rng, area, spacing):
    n_side = int(area / spacing)
    xs = (np.arange(n_side) + 0.5) * spacing
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    x = gx.ravel() + rng.uniform(-0.3 * spacing, 0.3 * spacing, gx.size)
    y = gy.ravel() + rng.uniform(-0.3 * spacing, 0.3 * spacing, gy.size)
    z = _ground_slope(x, y) + rng.normal(0.0, 0.01, gx.size)
    return np.stack([x, y, z], axis=1)


def _vertical_stem(rng, x, y, base_z, height, radius, spacing, pts_per_ring=3):
    n_rings = max(int(height / spacing), 2)
    zs = base_z + np.linspace(0.0, height, n_rings)
    zs = np.repeat(zs, pts_per_ring)
    theta = rng.uniform(0, 2 * np.pi, len(zs))
    rr = radius * np.sqrt(rng.uniform(0.3, 1.0, len(zs)))
    return np.stack([x + rr * np.cos(theta), y + rr * np.sin(theta), zs], axis=1)


def _horizontal_bar(rng, start, direction, length, radius, spacing):
    n = max(int(length / spacing), 2)
    t = np.linspace(0.0, length, n)
    theta = rng.uniform(0, 2 * np.pi, n)
    rr = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    d = np.asarray(direction) / np.linalg.norm(direction)
    ortho = np.array([-d[1], d[0]])
    pts = np.asarray(start) + t[:, None] * np.array([d[0], d[1], 0.0])
    pts[:, 0] += rr * np.cos(theta) * ortho[0]
    pts[:, 1] += rr * np.cos(theta) * ortho[1]
    pts[:, 2] += rr * np.sin(theta)
    return pts


def _crown(rng, cx, cy, cz, radius, spacing):
    target = max(int((4.19 * radius**3) / (2.2 * spacing) ** 3), 50)
    pts = rng.uniform(-1.0, 1.0, (int(target * 2.2), 3))
    pts = pts[np.einsum("ij,ij->i", pts, pts) <= 1.0][:target]
    return pts * radius * np.array([1.0, 1.0, 0.8]) + np.array([cx, cy, cz])


def _facade(rng, corner, direction, width, height, spacing):
    d = np.asarray(direction) / np.linalg.norm(direction)
    step = spacing * 1.2
    nu = max(int(width / step), 2)
    nv = max(int(height / step), 2)
    u, v = np.meshgrid(np.linspace(0, width, nu), np.linspace(0, height, nv), indexing="ij")
    u = u.ravel() + rng.uniform(-0.3 * step, 0.3 * step, u.size)
    v = v.ravel()
    normal = np.array([-d[1], d[0]])
    jitter = rng.normal(0.0, 0.015, u.size)
    x = corner[0] + u * d[0] + jitter * normal[0]
    y = corner[1] + u * d[1] + jitter * normal[1]
    z = corner[2] + v
    return np.stack([x, y, z], axis=1)


def _wire_span(rng, a, b, spacing):
    length = float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
    n = max(int(length / spacing), 2)
    t = np.linspace(0.0, 1.0, n)
    pts = np.asarray(a) + t[:, None] * (np.asarray(b) - np.asarray(a))
    pts[:, 2] -= 0.25 * np.sin(np.pi * t)  # sag
    pts += rng.normal(0.0, 0.008, pts.shape)
    return pts


def generate_scene(spec: SceneSpec) -> Scene:
    """Build the scene described by ``spec``; deterministic in its seed."""
    rng = np.random.default_rng(spec.seed)
    area = spec.area
    ways = [
        StreetWay(id=f"way-h{k}", nodes=[[0.0, area * f], [area, area * f]])
        for k, f in enumerate((0.2, 0.4, 0.6, 0.8), start=1)
    ]

    # object slots march along the streets, 10 m apart, alternating sides
    slots = []
    step = 10.0
    for wi, way in enumerate(ways):
        y0 = way.nodes[0][1]
        n_slots = int((area - 16.0) / step)
        for k in range(n_slots):
            x = 8.0 + k * step
            side = 1 if (k + wi) % 2 == 0 else -1
            slots.append((x, y0, side, wi))
    order = rng.permutation(len(slots))
    need = spec.n_poles + spec.n_trees + spec.n_walls
    if need > len(slots):
        raise ValueError(f"scene can hold at most {len(slots)} objects, asked for {need}")
    pole_slots = [slots[i] for i in order[: spec.n_poles]]
    tree_slots = [slots[i] for i in order[spec.n_poles : spec.n_poles + spec.n_trees]]
    wall_slots = [slots[i] for i in order[spec.n_poles + spec.n_trees : need]]

    chunks = []
    if spec.ground:
        chunks.append(_ground_patch(rng, area, spec.spacing))

    # keep objects from adjacent streets apart in cramped scenes
    scale = min(1.0, (0.2 * area) / 30.0)

    poles = []
    for x, y0, side, wi in pole_slots:
        px = x + rng.uniform(-1.5, 1.5)
        py = y0 + side * scale * rng.uniform(4.5, 6.0)
        base_z = _ground_slope(px, py)
        height = rng.uniform(7.0, 12.0)
        chunks.append(_vertical_stem(rng, px, py, base_z, height, 0.06, spec.spacing))
        arm_dir = np.array([0.0, -side], dtype=float)
        chunks.append(
            _horizontal_bar(
                rng,
                (px, py, base_z + height - 0.4),
                arm_dir,
                rng.uniform(1.0, 1.5),
                0.12,
                spec.spacing,
            )
        )
        poles.append(
            {"x": px, "y": py, "base_z": base_z, "height": height, "way": wi, "has_wire": False}
        )

    # wires join consecutive poles on the same street when close enough
    wired_pairs = []
    for wi in range(len(ways)):
        street_poles = sorted(
            (p for p in poles if p["way"] == wi), key=lambda p: p["x"]
        )
        for a, b in zip(street_poles[:-1], street_poles[1:]):
            if b["x"] - a["x"] <= 40.0:
                za = a["base_z"] + a["height"] - 0.9
                zb = b["base_z"] + b["height"] - 0.9
                chunks.append(_wire_span(rng, (a["x"], a["y"], za), (b["x"], b["y"], zb), spec.spacing))
                a["has_wire"] = b["has_wire"] = True
                wired_pairs.append((a["x"], b["x"], wi))

    trees = []
    for x, y0, side, wi in tree_slots:
        tx = x + rng.uniform(-1.5, 1.5)
        ty = y0 + side * scale * rng.uniform(7.5, 9.0)
        base_z = _ground_slope(tx, ty)
        trunk_h = rng.uniform(2.5, 4.0)
        crown_r = rng.uniform(1.6, 2.4)
        chunks.append(_vertical_stem(rng, tx, ty, base_z, trunk_h, 0.1, spec.spacing))
        chunks.append(_crown(rng, tx, ty, base_z + trunk_h + 0.7 * crown_r, crown_r, spec.spacing))
        trees.append({"x": tx, "y": ty, "trunk_height": trunk_h, "crown_radius": crown_r})

    buildings = []
    walls = []
    for x, y0, side, wi in wall_slots:
        width = rng.uniform(9.0, 11.0)
        height = rng.uniform(6.0, 10.0)
        setback = rng.uniform(12.0, 15.0)
        cx = x - width / 2
        cy = y0 + side * setback
        base_z = _ground_slope(cx, cy)
        d = np.array([1.0, 0.0])
        chunks.append(_facade(rng, (cx, cy, base_z), d, width, height, spec.spacing))
        # short side returns give the building a corner signature
        depth = 4.0
        side_dir = np.array([0.0, side])
        chunks.append(_facade(rng, (cx, cy, base_z), side_dir, depth, height, spec.spacing))
        chunks.append(_facade(rng, (cx + width, cy, base_z), side_dir, depth, height, spec.spacing))
        footprint = [
            [cx, cy],
            [cx + width, cy],
            [cx + width, cy + side * depth],
            [cx, cy + side * depth],
        ]
        buildings.append(footprint)
        walls.append({"x": cx, "y": cy, "width": width, "height": height})

    xyz = np.vstack(chunks) if chunks else np.empty((0, 3))
    truth = {
        "spec": {
            "n_poles": spec.n_poles,
            "n_trees": spec.n_trees,
            "n_walls": spec.n_walls,
            "area": spec.area,
            "spacing": spec.spacing,
            "seed": spec.seed,
        },
        "poles": poles,
        "trees": trees,
        "walls": walls,
    }
    return Scene(cloud=PointCloud(xyz), truth=truth, ways=ways, buildings=buildings)


def write_scene(scene: Scene, outdir) -> dict:
    """Write cloud.txt, truth.json, ways.json and buildings.json into outdir."""
    import os

    from .cloud import save_cloud

    os.makedirs(outdir, exist_ok=True)
    paths = {
        "cloud": os.path.join(outdir, "cloud.txt"),
        "truth": os.path.join(outdir, "truth.json"),
        "ways": os.path.join(outdir, "ways.json"),
        "buildings": os.path.join(outdir, "buildings.json"),
    }
    save_cloud(scene.cloud, paths["cloud"])
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        json.dump(scene.truth, fh, indent=2, default=float)
        fh.write("\n")
    with open(paths["ways"], "w", encoding="utf-8") as fh:
        json.dump([{"id": w.id, "nodes": w.nodes.tolist()} for w in scene.ways], fh, indent=2)
        fh.write("\n")
    with open(paths["buildings"], "w", encoding="utf-8") as fh:
        json.dump(scene.buildings, fh, indent=2, default=float)
        fh.write("\n")
    return paths


def score_detection(sites, truth, match_dist: float = 1.5) -> dict:
    """Precision/recall of detected sites against the generator's pole list.

    A detection matches the nearest unmatched true pole within match_dist.
    """
    true_xy = np.array([[p["x"], p["y"]] for p in truth["poles"]], dtype=float).reshape(-1, 2)
    matched = np.zeros(len(true_xy), dtype=bool)
    tp = 0
    for s in sites:
        if len(true_xy) == 0:
            break
        d = np.hypot(true_xy[:, 0] - s.x, true_xy[:, 1] - s.y)
        d[matched] = np.inf
        j = int(np.argmin(d))
        if d[j] <= match_dist:
            matched[j] = True
            tp += 1
    fp = len(sites) - tp
    fn = len(true_xy) - tp
    precision = tp / max(tp + fp, 1)
    recall = tp / max(tp + fn, 1)
    return {"tp": tp, "fp": fp, "fn": fn, "precision": precision, "recall": recall}


def short_tree_scene(gap: float = 60.0, spacing: float = 0.07, seed: int = 7):
    """Two poles with a short dense tree midway: LoS only above the crown.

    Returns (scene, site_a, site_b, low_height, high_height); the crown tops
    out near 4.5 m so a 4 m test height is blocked and 8 m is clear.
    """
    from .poles import SiteCandidate

    rng = np.random.default_rng(seed)
    chunks = []
    x0, x1 = 10.0, 10.0 + gap
    y = 20.0
    for px in (x0, x1):
        chunks.append(_vertical_stem(rng, px, y, 0.0, 9.0, 0.06, spacing))
    mid = (x0 + x1) / 2
    chunks.append(_vertical_stem(rng, mid, y, 0.0, 2.0, 0.1, spacing))
    chunks.append(_crown(rng, mid, y, 3.2, 1.6, spacing))
    ground = _ground_patch(rng, 16.0, 0.12)
    ground[:, 0] += mid - 8.0
    ground[:, 1] += y - 8.0
    ground[:, 2] -= _ground_slope(ground[:, 0], ground[:, 1])  # flat here
    chunks.append(ground)
    scene = Scene(cloud=PointCloud(np.vstack(chunks)), truth={"poles": []}, ways=[])
    a = SiteCandidate(id="a", x=x0, y=y, mount_z=8.0)
    b = SiteCandidate(id="b", x=x1, y=y, mount_z=8.0)
    return scene, a, b, 4.0, 8.0
