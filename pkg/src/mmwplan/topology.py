"""Assemble a DesignProblem from detected sites, LoS edges, POPs and demands.

Radio sectors are derived from LoS neighbors grouped into four 90-degree
azimuth quadrants per site.  WiFi sectors cover in-range demand points,
client nodes get one backbone-facing radio and one wired drop sector, and a
virtual INT source feeds every POP over zero-cost fiber arcs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .network import Arc, DesignProblem, Sector, Site


@dataclass
class NetworkConfig:
    dn_site_cost: float = 500.0
    pop_site_cost: float = 1500.0
    cn_site_cost: float = 150.0
    radio_sector_cost: float = 250.0
    wifi_sector_cost: float = 100.0
    cn_radio_sector_cost: float = 80.0
    wired_sector_cost: float = 10.0
    default_throughput: float = 1.8
    default_quality: float = 0.99
    fiber_throughput: float = 1000.0
    wifi_range: float = 40.0
    cn_radio_range: float = 60.0
    cn_wire_range: float = 30.0
    quality_alpha: float = 0.1
    max_hops: float = 10.0
    polarity: bool = True
    pop_match_dist: float = 3.0
    demand_spacing: float = 30.0


def uniform_demand_grid(x0, y0, x1, y1, spacing=30.0, demand=1.0) -> list:
    """Demand points every ``spacing`` meters over [x0, x1] x [y0, y1]."""
    out = []
    k = 0
    ny = int(math.floor((y1 - y0) / spacing)) + 1
    nx = int(math.floor((x1 - x0) / spacing)) + 1
    for i in range(nx):
        for j in range(ny):
            k += 1
            out.append({"id": f"dem-{k:03d}", "x": x0 + i * spacing, "y": y0 + j * spacing, "demand": demand})
    return out


def _quadrant(dx: float, dy: float) -> int:
    az = math.degrees(math.atan2(dy, dx)) % 360.0
    return int(az // 90.0)


def build_network(
    candidates,
    los_edges,
    pops,
    demands,
    cns=(),
    config: NetworkConfig = None,
    objective: str = "min_cost",
    budget: float = 0.0,
) -> DesignProblem:
    """Wire detection and LoS outputs into a solvable DesignProblem.

    candidates: detected DN sites (id, x, y); los_edges: site-id pairs with
    LoS; pops: dicts with optional "id" (matched against candidates by id or
    proximity, otherwise standalone sites); demands: dicts with id/x/y/demand
    or {"grid": {...}} for a uniform lattice; cns: optional client nodes that
    bridge backbone and demand over wired drops.
    """
    cfg = config or NetworkConfig()
    sites: dict[str, Site] = {}
    for c in candidates:
        sites[c.id] = Site(id=c.id, kind="DN", x=c.x, y=c.y, cost=cfg.dn_site_cost)

    for k, p in enumerate(pops, start=1):
        pid = str(p.get("id") or f"pop-{k:03d}")
        cost = float(p.get("cost", cfg.pop_site_cost))
        target = None
        if pid in sites:
            target = sites[pid]
        elif "x" in p and "y" in p:
            best, best_d = None, cfg.pop_match_dist
            for s in sites.values():
                d = math.hypot(s.x - float(p["x"]), s.y - float(p["y"]))
                if d <= best_d:
                    best, best_d = s, d
            target = best
        if target is not None:
            target.kind = "POP"
            target.cost = cost
        else:
            if "x" not in p or "y" not in p:
                raise ValueError(f"POP {pid!r} matches no candidate and has no coordinates")
            sites[pid] = Site(id=pid, kind="POP", x=float(p["x"]), y=float(p["y"]), cost=cost)

    if isinstance(demands, dict) and "grid" in demands:
        g = demands["grid"]
        demands = uniform_demand_grid(
            g["x0"], g["y0"], g["x1"], g["y1"],
            g.get("spacing", cfg.demand_spacing), g.get("demand", 1.0),
        )
    for d in demands:
        did = str(d["id"])
        if did in sites:
            raise ValueError(f"duplicate site id {did}")
        sites[did] = Site(id=did, kind="DEM", x=float(d["x"]), y=float(d["y"]), demand=float(d["demand"]))

    for c in cns:
        cid = str(c["id"])
        if cid in sites:
            raise ValueError(f"duplicate site id {cid}")
        sites[cid] = Site(id=cid, kind="CN", x=float(c["x"]), y=float(c["y"]), cost=float(c.get("cost", cfg.cn_site_cost)))

    pop_sites = [s for s in sites.values() if s.kind == "POP"]
    if not pop_sites:
        raise ValueError("no POP sites after matching")
    int_site = Site(
        id="int",
        kind="INT",
        x=sum(s.x for s in pop_sites) / len(pop_sites),
        y=sum(s.y for s in pop_sites) / len(pop_sites),
    )
    sites["int"] = int_site

    # LoS neighbors per backbone site
    neighbors: dict[str, set] = {}
    for e in los_edges:
        if e.site_a not in sites or e.site_b not in sites:
            raise ValueError(f"LoS edge references unknown site {e.site_a}/{e.site_b}")
        neighbors.setdefault(e.site_a, set()).add(e.site_b)
        neighbors.setdefault(e.site_b, set()).add(e.site_a)

    arcs = []
    sector_of = {}  # (site, peer) -> sector id on site facing peer

    def radio_sectors(site: Site, peers, cost):
        by_quad = {}
        for peer_id in sorted(peers):
            peer = sites[peer_id]
            q = _quadrant(peer.x - site.x, peer.y - site.y)
            by_quad.setdefault(q, []).append(peer_id)
        for q, members in sorted(by_quad.items()):
            sec = Sector(id=f"{site.id}:r{q}", site_id=site.id, cost=cost, reachable=members, kind="radio")
            site.sectors.append(sec)
            for peer_id in members:
                sector_of[(site.id, peer_id)] = sec.id

    backbone = [s for s in sites.values() if s.kind in ("DN", "POP")]
    for s in sorted(backbone, key=lambda s: s.id):
        radio_sectors(s, neighbors.get(s.id, ()), cfg.radio_sector_cost)

    # fiber: INT feeds every POP
    int_sec = Sector(
        id="int:fiber", site_id="int", cost=0.0,
        reachable=sorted(p.id for p in pop_sites), kind="fiber",
    )
    int_site.sectors.append(int_sec)
    for p in sorted(pop_sites, key=lambda s: s.id):
        rx = Sector(id=f"{p.id}:fiber", site_id=p.id, cost=0.0, reachable=["int"], kind="fiber")
        p.sectors.append(rx)
        arcs.append(Arc(frm="int", to=p.id, throughput=cfg.fiber_throughput, quality=1.0,
                        from_sector="int:fiber", to_sector=rx.id))

    # radio arcs in both directions per LoS edge
    seen = set()
    for e in los_edges:
        key = tuple(sorted([e.site_a, e.site_b]))
        if key in seen:
            continue
        seen.add(key)
        for frm, to in ((key[0], key[1]), (key[1], key[0])):
            arcs.append(
                Arc(frm=frm, to=to, throughput=cfg.default_throughput, quality=cfg.default_quality,
                    from_sector=sector_of[(frm, to)], to_sector=sector_of[(to, frm)])
            )

    # CN backbone links by range (building-mounted, assumed aimed at a DN)
    dem_sites = sorted((s for s in sites.values() if s.kind == "DEM"), key=lambda s: s.id)
    for c in sorted((s for s in sites.values() if s.kind == "CN"), key=lambda s: s.id):
        reach = [
            b.id for b in sorted(backbone, key=lambda s: s.id)
            if math.hypot(b.x - c.x, b.y - c.y) <= cfg.cn_radio_range
        ]
        if reach:
            sec = Sector(id=f"{c.id}:r0", site_id=c.id, cost=cfg.cn_radio_sector_cost, reachable=reach, kind="radio")
            c.sectors.append(sec)
            for b_id in reach:
                sector_of[(c.id, b_id)] = sec.id
                b = sites[b_id]
                q = _quadrant(c.x - b.x, c.y - b.y)
                bsec = next((x for x in b.sectors if x.id == f"{b_id}:r{q}"), None)
                if bsec is None:
                    bsec = Sector(id=f"{b_id}:r{q}", site_id=b_id, cost=cfg.radio_sector_cost, reachable=[], kind="radio")
                    b.sectors.append(bsec)
                if c.id not in bsec.reachable:
                    bsec.reachable.append(c.id)
                sector_of[(b_id, c.id)] = bsec.id
                for frm, to in ((b_id, c.id), (c.id, b_id)):
                    arcs.append(
                        Arc(frm=frm, to=to, throughput=cfg.default_throughput, quality=cfg.default_quality,
                            from_sector=sector_of[(frm, to)], to_sector=sector_of[(to, frm)])
                    )
        wired = [d.id for d in dem_sites if math.hypot(d.x - c.x, d.y - c.y) <= cfg.cn_wire_range]
        if wired:
            sec = Sector(id=f"{c.id}:wire", site_id=c.id, cost=cfg.wired_sector_cost, reachable=wired, kind="wired")
            c.sectors.append(sec)
            for did in wired:
                sector_of[(c.id, did)] = sec.id

    # WiFi access from backbone sites to in-range demands
    for s in sorted(backbone, key=lambda s: s.id):
        covered = [d.id for d in dem_sites if math.hypot(d.x - s.x, d.y - s.y) <= cfg.wifi_range]
        if covered:
            sec = Sector(id=f"{s.id}:wifi", site_id=s.id, cost=cfg.wifi_sector_cost, reachable=covered, kind="wifi")
            s.sectors.append(sec)
            for did in covered:
                sector_of[(s.id, did)] = sec.id

    # demand receivers and the arcs that feed them
    for d in dem_sites:
        feeders = sorted(sid for (sid, target) in sector_of if target == d.id)
        rx = Sector(id=f"{d.id}:rx", site_id=d.id, cost=0.0, reachable=feeders, kind="wired")
        d.sectors.append(rx)
        for sid in feeders:
            arcs.append(
                Arc(frm=sid, to=d.id, throughput=cfg.default_throughput, quality=cfg.default_quality,
                    from_sector=sector_of[(sid, d.id)], to_sector=rx.id)
            )

    arcs.sort(key=lambda a: (a.frm, a.to))
    ordered = sorted(sites.values(), key=lambda s: (SITE_ORDER[s.kind], s.id))
    problem = DesignProblem(
        sites=ordered,
        arcs=arcs,
        objective=objective,
        budget=budget,
        quality_alpha=cfg.quality_alpha,
        max_hops=cfg.max_hops,
        polarity=cfg.polarity,
    )
    return problem.validate()


SITE_ORDER = {"INT": 0, "POP": 1, "DN": 2, "CN": 3, "DEM": 4}


# -- problem files -------------------------------------------------------------


def problem_to_dict(problem: DesignProblem) -> dict:
    return {
        "sites": [
            {
                "id": s.id,
                "kind": s.kind,
                "x": s.x,
                "y": s.y,
                "cost": s.cost,
                "demand": s.demand,
                "sectors": [
                    {"id": sec.id, "cost": sec.cost, "kind": sec.kind, "reachable": sec.reachable}
                    for sec in s.sectors
                ],
            }
            for s in problem.sites
        ],
        "arcs": [
            {
                "from": a.frm,
                "to": a.to,
                "throughput": a.throughput,
                "quality": a.quality,
                "from_sector": a.from_sector,
                "to_sector": a.to_sector,
            }
            for a in problem.arcs
        ],
        "objective": problem.objective,
        "alpha": problem.quality_alpha,
        "max_hops": problem.max_hops,
        "budget": problem.budget,
        "polarity": problem.polarity,
        "merged_tdm": problem.merged_tdm,
        "tighten_bigm": problem.tighten_bigm,
    }


def save_problem(problem: DesignProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem), fh, indent=2)
        fh.write("\n")


def load_problem(path) -> DesignProblem:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    sites = []
    for s in data["sites"]:
        site = Site(
            id=str(s["id"]),
            kind=str(s["kind"]),
            x=float(s.get("x", 0.0)),
            y=float(s.get("y", 0.0)),
            cost=float(s.get("cost", 0.0)),
            demand=float(s.get("demand", 0.0)),
        )
        for sec in s.get("sectors", ()):
            site.sectors.append(
                Sector(
                    id=str(sec["id"]),
                    site_id=site.id,
                    cost=float(sec.get("cost", 0.0)),
                    reachable=[str(r) for r in sec.get("reachable", ())],
                    kind=str(sec.get("kind", "radio")),
                )
            )
        sites.append(site)
    arcs = [
        Arc(
            frm=str(a["from"]),
            to=str(a["to"]),
            throughput=float(a["throughput"]),
            quality=float(a["quality"]),
            from_sector=str(a["from_sector"]),
            to_sector=str(a["to_sector"]),
        )
        for a in data["arcs"]
    ]
    problem = DesignProblem(
        sites=sites,
        arcs=arcs,
        objective=str(data.get("objective", "min_cost")),
        budget=float(data.get("budget", 0.0)),
        quality_alpha=float(data.get("alpha", 0.1)),
        max_hops=float(data.get("max_hops", 10.0)),
        polarity=bool(data.get("polarity", True)),
        merged_tdm=bool(data.get("merged_tdm", False)),
        tighten_bigm=bool(data.get("tighten_bigm", False)),
    )
    return problem.validate()
