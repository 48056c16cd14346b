"""Solved plans, their summary metrics, and JSON/GeoJSON export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .network import DesignProblem, MipModel

ACTIVE_TOL = 1e-6


@dataclass
class Plan:
    """A solved network design: activations, flows, time shares, colors."""

    status: str  # optimal | feasible | infeasible | no_solution
    objective_value: float = 0.0
    gap: float = 0.0
    active_sites: list = field(default_factory=list)
    active_sectors: list = field(default_factory=list)
    flows: dict = field(default_factory=dict)  # "i->j" -> flow
    tdm: dict = field(default_factory=dict)  # "i->j" -> fraction
    polarity: dict = field(default_factory=dict)  # site id -> "red" | "blue"
    unsatisfied: dict = field(default_factory=dict)  # DEM id -> y_k
    bound: float = 0.0
    search_gap: float = 0.0  # the branch-and-bound stop-rule gap
    solve_seconds: float = 0.0
    nodes_explored: int = 0
    values: dict = field(default_factory=dict)  # variable name -> value

    @classmethod
    def from_solution(cls, model: MipModel, x, status="optimal", gap=0.0, bound=0.0,
                      seconds=0.0, nodes=0) -> "Plan":
        plan = cls(status=status, gap=gap, bound=bound, search_gap=gap,
                   solve_seconds=seconds, nodes_explored=nodes)
        plan.objective_value = model.objective_value(x)
        for i, v in enumerate(model.variables):
            val = float(x[i])
            plan.values[v.name] = val
            inner = v.name[v.name.index("[") + 1 : -1] if "[" in v.name else v.name
            if v.role == "z" and val > 0.5:
                plan.active_sites.append(inner)
            elif v.role == "s" and val > 0.5:
                plan.active_sectors.append(inner)
            elif v.role == "f" and val > ACTIVE_TOL:
                plan.flows[inner] = val
            elif v.role == "p" and val > ACTIVE_TOL:
                plan.tdm[inner] = val
            elif v.role == "r" and val > 0.5:
                plan.polarity[inner] = "red"
            elif v.role == "b" and val > 0.5:
                plan.polarity[inner] = "blue"
            elif v.role == "y" and val > ACTIVE_TOL:
                plan.unsatisfied[inner] = val
        return plan

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective_value": self.objective_value,
            "gap": self.gap,
            "search_gap": self.search_gap,
            "bound": self.bound,
            "active_sites": self.active_sites,
            "active_sectors": self.active_sectors,
            "flows": self.flows,
            "tdm": self.tdm,
            "polarity": self.polarity,
            "unsatisfied": self.unsatisfied,
            "solve_seconds": self.solve_seconds,
            "nodes_explored": self.nodes_explored,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Plan":
        plan = cls(status=data["status"])
        for key in (
            "objective_value",
            "gap",
            "search_gap",
            "bound",
            "active_sites",
            "active_sectors",
            "flows",
            "tdm",
            "polarity",
            "unsatisfied",
            "solve_seconds",
            "nodes_explored",
        ):
            if key in data:
                setattr(plan, key, data[key])
        return plan


def save_plan(plan: Plan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan.to_dict(), fh, indent=2)
        fh.write("\n")


def load_plan(path) -> Plan:
    with open(path, "r", encoding="utf-8") as fh:
        return Plan.from_dict(json.load(fh))


@dataclass
class PlanMetrics:
    """Summary counters in the possible-versus-selected style."""

    dn_sites_possible: int = 0
    dn_sites_selected: int = 0
    antenna_nodes_possible: int = 0
    antenna_nodes_selected: int = 0
    wifi_aps_possible: int = 0
    wifi_aps_selected: int = 0
    demand_possible: int = 0
    demand_connected: int = 0
    demand_alt_paths: int = 0
    demand_alt_paths_pct: float = 0.0
    avg_nodes_per_site_possible: float = 0.0
    avg_nodes_per_site_selected: float = 0.0
    fiber_pops_possible: int = 0
    fiber_pops_selected: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compute_metrics(problem: DesignProblem, plan: Plan) -> PlanMetrics:
    """Plan summary: selection counts, connected demands, alternate paths.

    A demand counts as connected when its unserved amount is zero (or its
    inflow covers the demand under min_cost).  It has an alternate path when
    it stays connected to INT in the active-site graph after deleting any
    single non-POP intermediate site; POPs are never deleted.
    """
    mt = PlanMetrics()
    active = set(plan.active_sites)
    active_sectors = set(plan.active_sectors)
    dn = [s for s in problem.sites if s.kind == "DN"]
    mt.dn_sites_possible = len(dn)
    mt.dn_sites_selected = sum(1 for s in dn if s.id in active)
    pops = [s for s in problem.sites if s.kind == "POP"]
    mt.fiber_pops_possible = len(pops)
    mt.fiber_pops_selected = sum(1 for s in pops if s.id in active)

    radio = [sec for s in problem.sites for sec in s.sectors if sec.kind == "radio"]
    wifi = [sec for s in problem.sites for sec in s.sectors if sec.kind == "wifi"]
    mt.antenna_nodes_possible = len(radio)
    mt.antenna_nodes_selected = sum(1 for sec in radio if sec.id in active_sectors)
    mt.wifi_aps_possible = len(wifi)
    mt.wifi_aps_selected = sum(1 for sec in wifi if sec.id in active_sectors)

    dems = [s for s in problem.sites if s.kind == "DEM"]
    mt.demand_possible = len(dems)
    inflow = {}
    for key, f in plan.flows.items():
        frm, to = key.split("->")
        inflow[to] = inflow.get(to, 0.0) + f
    connected = []
    for s in dems:
        if plan.status in ("optimal", "feasible"):
            if problem.objective == "max_coverage":
                ok = plan.unsatisfied.get(s.id, 0.0) <= ACTIVE_TOL
            else:
                ok = inflow.get(s.id, 0.0) >= s.demand - 1e-6
        else:
            ok = False
        if ok:
            connected.append(s.id)
    mt.demand_connected = len(connected)

    # alternate-path check: node-biconnectivity to the source over the
    # subgraph induced by active sites (all problem arcs between them)
    int_id = problem.kind_ids("INT")[0]
    nodes = active | {int_id}
    adjacency = {}
    for a in problem.arcs:
        if a.frm in nodes and a.to in nodes:
            adjacency.setdefault(a.frm, set()).add(a.to)
            adjacency.setdefault(a.to, set()).add(a.frm)
    pop_ids = {s.id for s in pops}

    def reaches(src, dst, banned):
        if src == dst:
            return True
        seen = {src}
        stack = [src]
        while stack:
            u = stack.pop()
            for v in adjacency.get(u, ()):
                if v == banned or v in seen:
                    continue
                if v == dst:
                    return True
                seen.add(v)
                stack.append(v)
        return False

    alt = 0
    for d in connected:
        if not reaches(d, int_id, banned=None):
            continue
        candidates = [
            v for v in nodes
            if v not in (d, int_id) and v not in pop_ids and v in adjacency
        ]
        if all(reaches(d, int_id, banned=v) for v in candidates):
            alt += 1
    mt.demand_alt_paths = alt
    mt.demand_alt_paths_pct = 100.0 * alt / len(dems) if dems else 0.0

    if mt.dn_sites_possible:
        mt.avg_nodes_per_site_possible = mt.antenna_nodes_possible / mt.dn_sites_possible
    if mt.dn_sites_selected:
        mt.avg_nodes_per_site_selected = mt.antenna_nodes_selected / mt.dn_sites_selected
    return mt


def plan_geojson(problem: DesignProblem, plan: Plan) -> dict:
    """FeatureCollection of site points and arc lines with activity flags."""
    active = set(plan.active_sites)
    features = []
    for s in problem.sites:
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [s.x, s.y]},
                "properties": {
                    "id": s.id,
                    "kind": s.kind,
                    "active": s.id in active,
                    "polarity": plan.polarity.get(s.id),
                    "cost": s.cost,
                    "demand": s.demand,
                },
            }
        )
    for a in problem.arcs:
        key = f"{a.frm}->{a.to}"
        frm, to = problem.site(a.frm), problem.site(a.to)
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[frm.x, frm.y], [to.x, to.y]],
                },
                "properties": {
                    "from": a.frm,
                    "to": a.to,
                    "active": key in plan.flows or key in plan.tdm,
                    "flow": plan.flows.get(key, 0.0),
                    "tdm": plan.tdm.get(key, 0.0),
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}
