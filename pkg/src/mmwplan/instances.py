"""Deterministic demo and benchmark problem builders.

These are constructed directly as DesignProblems (no point cloud needed) so
tests, demos and the what-if service have small instances with enumerable
optima, plus mid-size instances for the sensitivity protocol and the
two-stage timing comparison.
"""

from __future__ import annotations

import math

import numpy as np

from .network import Arc, DesignProblem, Sector, Site


def demo_problem(objective: str = "min_cost", budget: float = 0.0) -> DesignProblem:
    """The 4-site demo: one POP, a cheap and an expensive DN, one demand.

    Both DNs can serve the demand, so excluding or pricing one reroutes the
    plan; every optimum is enumerable by hand.
    """
    int_site = Site(id="int", kind="INT", x=0.0, y=20.0)
    pop = Site(id="pop-001", kind="POP", x=10.0, y=20.0, cost=30.0)
    dn_a = Site(id="dn-a", kind="DN", x=60.0, y=40.0, cost=5.0)
    dn_b = Site(id="dn-b", kind="DN", x=60.0, y=0.0, cost=9.0)
    dem = Site(id="dem-001", kind="DEM", x=110.0, y=20.0, demand=1.0)

    int_site.sectors = [Sector("int:fiber", "int", 0.0, ["pop-001"], "fiber")]
    pop.sectors = [
        Sector("pop-001:fiber", "pop-001", 0.0, ["int"], "fiber"),
        Sector("pop-001:r0", "pop-001", 3.0, ["dn-a", "dn-b"], "radio"),
    ]
    dn_a.sectors = [
        Sector("dn-a:r2", "dn-a", 3.0, ["pop-001"], "radio"),
        Sector("dn-a:wifi", "dn-a", 2.0, ["dem-001"], "wifi"),
    ]
    dn_b.sectors = [
        Sector("dn-b:r2", "dn-b", 3.0, ["pop-001"], "radio"),
        Sector("dn-b:wifi", "dn-b", 2.0, ["dem-001"], "wifi"),
    ]
    dem.sectors = [Sector("dem-001:rx", "dem-001", 0.0, ["dn-a", "dn-b"], "wired")]

    arcs = [
        Arc("int", "pop-001", 100.0, 1.0, "int:fiber", "pop-001:fiber"),
        Arc("pop-001", "dn-a", 1.8, 0.99, "pop-001:r0", "dn-a:r2"),
        Arc("dn-a", "pop-001", 1.8, 0.99, "dn-a:r2", "pop-001:r0"),
        Arc("pop-001", "dn-b", 1.8, 0.99, "pop-001:r0", "dn-b:r2"),
        Arc("dn-b", "pop-001", 1.8, 0.99, "dn-b:r2", "pop-001:r0"),
        Arc("dn-a", "dem-001", 1.8, 0.99, "dn-a:wifi", "dem-001:rx"),
        Arc("dn-b", "dem-001", 1.8, 0.99, "dn-b:wifi", "dem-001:rx"),
    ]
    return DesignProblem(
        sites=[int_site, pop, dn_a, dn_b, dem],
        arcs=arcs,
        objective=objective,
        budget=budget,
    ).validate()


def sensitivity_instance(n_dems: int = 60, n_dns: int = 20, n_pops: int = 4,
                         base_demand: float = 0.05, seed: int = 11,
                         polarity: bool = False) -> DesignProblem:
    """Mid-size instance for demand-multiplier sweeps.

    DNs sit on a lattice over the demand grid; a few of them also carry
    fiber.  Radio reach is distance-based, so the graph is meshy enough for
    rerouting but small enough to solve at a 10% gap in seconds.  Site
    conditioning and rental dominate the cost mix (sector hardware is an
    order of magnitude cheaper), and per-demand throughput is sized so POP
    egress capacity binds as the multiplier grows.
    """
    rng = np.random.default_rng(seed)
    sites = []
    int_site = Site(id="int", kind="INT", x=-20.0, y=-20.0)
    sites.append(int_site)

    # demand lattice: n_dems points spaced 30 m, roughly 2:1 aspect
    cols = int(math.ceil(math.sqrt(n_dems * 2.0)))
    rows = int(math.ceil(n_dems / cols))
    dems = []
    for k in range(n_dems):
        x = (k % cols) * 30.0
        y = (k // cols) * 30.0
        dems.append(Site(id=f"dem-{k + 1:03d}", kind="DEM", x=x, y=y, demand=base_demand))
    width = (cols - 1) * 30.0
    height = (rows - 1) * 30.0

    # a covering DN lattice first (every demand within wifi range), then
    # extra relays scattered for routing alternatives
    dn_cols = max(int(math.ceil(width / 54.0)), 1)
    dn_rows = max(int(math.ceil(height / 50.0)), 1)
    if dn_cols * dn_rows > n_dns:
        raise ValueError(f"need at least {dn_cols * dn_rows} DNs to cover {n_dems} demands")
    dns = []
    k = 0
    for r in range(dn_rows):
        for c in range(dn_cols):
            if k >= n_dns:
                break
            k += 1
            x = (c + 0.5) * width / dn_cols
            y = (r + 0.5) * height / dn_rows
            dns.append(Site(id=f"dn-{k:03d}", kind="DN", x=x, y=y, cost=float(rng.uniform(380, 620))))
    while k < n_dns:
        k += 1
        dns.append(
            Site(
                id=f"dn-{k:03d}",
                kind="DN",
                x=float(rng.uniform(0, width)),
                y=float(rng.uniform(0, height)),
                cost=float(rng.uniform(380, 620)),
            )
        )

    # fiber lands at spread-out lattice sites so no corner of the demand
    # field is starved at high multipliers
    anchors = [
        (width * fx, height * fy)
        for fx, fy in ((0.25, 0.25), (0.75, 0.75), (0.25, 0.75), (0.75, 0.25),
                       (0.5, 0.5), (0.0, 0.5), (1.0, 0.5))
    ][:n_pops]
    taken = set()
    for ax, ay in anchors:
        best = min(
            (s for s in dns if s.id not in taken),
            key=lambda s: math.hypot(s.x - ax, s.y - ay),
        )
        taken.add(best.id)
        best.kind = "POP"
        best.cost = 800.0
    sites.extend(dns)
    sites.extend(dems)

    problem = _assemble(sites, radio_range=70.0, wifi_range=45.0,
                        radio_cost=30.0, wifi_cost=15.0)
    problem.polarity = polarity
    return problem


def benchmark_50(seed: int = 5) -> DesignProblem:
    """A 50-site instance used for the two-stage versus direct timing check."""
    rng = np.random.default_rng(seed)
    sites = [Site(id="int", kind="INT", x=-10.0, y=-10.0)]
    k = 0
    for r in range(5):
        for c in range(5):
            k += 1
            sites.append(
                Site(
                    id=f"dn-{k:03d}",
                    kind="DN",
                    x=c * 45.0 + rng.uniform(-5, 5),
                    y=r * 45.0 + rng.uniform(-5, 5),
                    cost=float(rng.uniform(300, 700)),
                )
            )
    sites[1].kind = "POP"
    sites[1].cost = 1200.0
    sites[13].kind = "POP"
    sites[13].cost = 1200.0
    for j in range(24):
        sites.append(
            Site(
                id=f"dem-{j + 1:03d}",
                kind="DEM",
                x=(j % 6) * 36.0 + 10.0,
                y=(j // 6) * 45.0 + 10.0,
                demand=0.05,
            )
        )
    return _assemble(sites, radio_range=70.0, wifi_range=40.0)


def _assemble(sites, radio_range: float, wifi_range: float,
              throughput: float = 1.8, quality: float = 0.99,
              radio_cost: float = 250.0, wifi_cost: float = 100.0) -> DesignProblem:
    """Distance-based sector and arc construction shared by the builders."""
    backbone = [s for s in sites if s.kind in ("DN", "POP")]
    dems = [s for s in sites if s.kind == "DEM"]
    pops = [s for s in sites if s.kind == "POP"]
    int_site = next(s for s in sites if s.kind == "INT")

    arcs = []
    sector_of = {}

    links = []
    for i, a in enumerate(backbone):
        for b in backbone[i + 1 :]:
            if math.hypot(a.x - b.x, a.y - b.y) <= radio_range:
                links.append((a.id, b.id))
    by_site = {s.id: s for s in sites}

    def quadrant(frm, to):
        az = math.degrees(math.atan2(to.y - frm.y, to.x - frm.x)) % 360.0
        return int(az // 90.0)

    for s in backbone:
        peers = sorted({b for a, b in links if a == s.id} | {a for a, b in links if b == s.id})
        by_quad = {}
        for pid in peers:
            by_quad.setdefault(quadrant(s, by_site[pid]), []).append(pid)
        for q, members in sorted(by_quad.items()):
            sec = Sector(f"{s.id}:r{q}", s.id, radio_cost, members, "radio")
            s.sectors.append(sec)
            for pid in members:
                sector_of[(s.id, pid)] = sec.id

    for a_id, b_id in links:
        for frm, to in ((a_id, b_id), (b_id, a_id)):
            arcs.append(Arc(frm, to, throughput, quality, sector_of[(frm, to)], sector_of[(to, frm)]))

    int_site.sectors.append(Sector("int:fiber", "int", 0.0, sorted(p.id for p in pops), "fiber"))
    for p in sorted(pops, key=lambda s: s.id):
        rx = Sector(f"{p.id}:fiber", p.id, 0.0, ["int"], "fiber")
        p.sectors.append(rx)
        arcs.append(Arc("int", p.id, 1000.0, 1.0, "int:fiber", rx.id))

    for s in sorted(backbone, key=lambda s: s.id):
        covered = sorted(d.id for d in dems if math.hypot(d.x - s.x, d.y - s.y) <= wifi_range)
        if covered:
            sec = Sector(f"{s.id}:wifi", s.id, wifi_cost, covered, "wifi")
            s.sectors.append(sec)
            for did in covered:
                sector_of[(s.id, did)] = sec.id

    for d in sorted(dems, key=lambda s: s.id):
        feeders = sorted(sid for (sid, t) in sector_of if t == d.id)
        rx = Sector(f"{d.id}:rx", d.id, 0.0, feeders, "wired")
        d.sectors.append(rx)
        for sid in feeders:
            arcs.append(Arc(sid, d.id, throughput, quality, sector_of[(sid, d.id)], rx.id))

    arcs.sort(key=lambda a: (a.frm, a.to))
    order = {"INT": 0, "POP": 1, "DN": 2, "CN": 3, "DEM": 4}
    problem = DesignProblem(
        sites=sorted(sites, key=lambda s: (order[s.kind], s.id)),
        arcs=arcs,
    )
    return problem.validate()


def random_small_problem(rng: np.random.Generator, objective: str = None) -> DesignProblem:
    """Random instance whose MIP has at most 12 free binaries (for enumeration)."""
    shape = rng.integers(0, 3)
    objective = objective or ("max_coverage" if rng.random() < 0.4 else "min_cost")
    budget = 0.0
    sites = [Site(id="int", kind="INT")]
    arcs = []

    def rnd_cost(lo, hi):
        return float(rng.uniform(lo, hi))

    if shape == 0:
        # POP serves the demand directly over wifi; polarity stays on
        pop = Site(id="pop-1", kind="POP", x=0, y=0, cost=rnd_cost(5, 20))
        dem = Site(id="dem-1", kind="DEM", x=20, y=0, demand=float(rng.uniform(0.5, 2.0)))
        pop.sectors = [
            Sector("pop-1:fiber", "pop-1", 0.0, ["int"], "fiber"),
            Sector("pop-1:wifi", "pop-1", rnd_cost(1, 5), ["dem-1"], "wifi"),
        ]
        dem.sectors = [Sector("dem-1:rx", "dem-1", 0.0, ["pop-1"], "wired")]
        sites += [pop, dem]
        sites[0].sectors = [Sector("int:fiber", "int", 0.0, ["pop-1"], "fiber")]
        arcs = [
            Arc("int", "pop-1", 100.0, 1.0, "int:fiber", "pop-1:fiber"),
            Arc("pop-1", "dem-1", float(rng.uniform(1.5, 4.0)), 0.99, "pop-1:wifi", "dem-1:rx"),
        ]
        polarity = True
    else:
        n_dn = int(shape)  # 1 or 2
        pop = Site(id="pop-1", kind="POP", x=0, y=0, cost=rnd_cost(5, 20))
        dem = Site(id="dem-1", kind="DEM", x=60, y=0, demand=float(rng.uniform(0.5, 2.0)))
        pop.sectors = [Sector("pop-1:fiber", "pop-1", 0.0, ["int"], "fiber")]
        sites[0].sectors = [Sector("int:fiber", "int", 0.0, ["pop-1"], "fiber")]
        arcs = [Arc("int", "pop-1", 100.0, 1.0, "int:fiber", "pop-1:fiber")]
        dns = []
        for k in range(n_dn):
            dn = Site(id=f"dn-{k + 1}", kind="DN", x=30, y=20 * k, cost=rnd_cost(3, 15))
            dn.sectors = [
                Sector(f"dn-{k + 1}:r0", f"dn-{k + 1}", rnd_cost(1, 5), ["pop-1"], "radio"),
                Sector(f"dn-{k + 1}:wifi", f"dn-{k + 1}", rnd_cost(1, 5), ["dem-1"], "wifi"),
            ]
            dns.append(dn)
        pop.sectors.append(
            Sector("pop-1:r0", "pop-1", rnd_cost(1, 5), [d.id for d in dns], "radio")
        )
        for dn in dns:
            t = float(rng.uniform(1.2, 4.0))
            arcs.append(Arc("pop-1", dn.id, t, 0.99, "pop-1:r0", f"{dn.id}:r0"))
            arcs.append(Arc(dn.id, "pop-1", t, 0.99, f"{dn.id}:r0", "pop-1:r0"))
            arcs.append(Arc(dn.id, "dem-1", float(rng.uniform(1.2, 4.0)), 0.99, f"{dn.id}:wifi", "dem-1:rx"))
        dem.sectors = [Sector("dem-1:rx", "dem-1", 0.0, [d.id for d in dns], "wired")]
        sites += [pop] + dns + [dem]
        polarity = False

    if objective == "max_coverage":
        budget = float(rng.uniform(10, 60))
    problem = DesignProblem(
        sites=sites,
        arcs=arcs,
        objective=objective,
        budget=budget,
        quality_alpha=0.1,
        max_hops=8.0,
        polarity=polarity,
    )
    return problem.validate()
