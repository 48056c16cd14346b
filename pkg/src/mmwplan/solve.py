"""Integer solving: branch and bound over the LP relaxation, the node-cost
Steiner-tree warm start, and the two-stage site-then-sector solve."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .network import DesignProblem, MipModel, build_mip
from .plans import Plan
from .simplex import CompiledLp, compile_model, solve_lp

INT_TOL = 1e-6


@dataclass
class SolveControls:
    """Stop rules and search knobs for branch and bound."""

    gap_target: float = 0.10
    time_limit: float = 1800.0
    branching: str = "most-fractional"
    warm_start: Plan | None = None
    strict_fixing: bool = False  # two-stage only: also pin non-tree sites to 0
    engine: str = "auto"  # LP backend: simplex | highs | auto (by model size)
    log: object = None  # optional callable for per-node lines

    def validate(self):
        if self.gap_target < 0:
            raise ValueError("gap_target must be >= 0")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.branching != "most-fractional":
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.engine not in ("simplex", "highs", "auto"):
            raise ValueError(f"unknown engine {self.engine!r}")
        return self


def _gap(incumbent: float, bound: float) -> float:
    if incumbent is None:
        return math.inf
    return (incumbent - bound) / max(abs(incumbent), 1e-9)


def branch_and_bound(model: MipModel, controls: SolveControls = None,
                     lower=None, upper=None) -> Plan:
    """Best incumbent within the gap target, depth-first with best-bound ties.

    Branches on the most fractional binary (ties to the smallest variable
    index); a provided warm-start plan seeds the incumbent.  Stops when the
    gap target is met, the tree is exhausted, or the time limit passes.
    """
    controls = (controls or SolveControls()).validate()
    t0 = time.time()
    lp = compile_model(model)
    l0 = lp.lower.copy() if lower is None else np.asarray(lower, dtype=np.float64).copy()
    u0 = lp.upper.copy() if upper is None else np.asarray(upper, dtype=np.float64).copy()
    binaries = lp.binary_idx
    round_up_safe = _round_up_safe(model)
    # branch on site activations before sectors before colors: the cheap
    # sector binaries otherwise crowd out the decisive site choices
    tiers = []
    for roles in (("z",), ("s",), ("r", "b")):
        tier = np.array(
            [j for j in binaries
             if j not in round_up_safe and model.variables[j].role in roles],
            dtype=np.int64,
        )
        if len(tier):
            tiers.append(tier)
    leftover = np.array(
        [j for j in binaries
         if j not in round_up_safe and model.variables[j].role not in ("z", "s", "r", "b")],
        dtype=np.int64,
    )
    if len(leftover):
        tiers.append(leftover)

    incumbent_x = None
    incumbent_obj = None
    if controls.warm_start is not None:
        x = _vector_from_plan(model, controls.warm_start)
        if x is not None and not model.check(x, tol=1e-6) and _is_integral(x, binaries):
            if np.all(x >= l0 - 1e-9) and np.all(x <= u0 + 1e-9):
                incumbent_x = x
                incumbent_obj = model.objective_value(x)

    # heap key: deeper first, then smaller parent bound, then discovery order
    seq = 0
    frontier = []
    heapq.heappush(frontier, ((0, -math.inf, seq), 0, -math.inf, l0, u0))
    nodes = 0
    best_bound_seen = math.inf
    log = controls.log if callable(controls.log) else None
    zs_idx = np.array([j for j in binaries if model.variables[j].role in ("z", "s")], dtype=np.int64)
    rb_idx = np.array([j for j in binaries if model.variables[j].role in ("r", "b")], dtype=np.int64)

    while frontier:
        if time.time() - t0 > controls.time_limit:
            break
        open_bounds = [item[2] for item in frontier]
        global_bound = min(open_bounds) if open_bounds else best_bound_seen
        if incumbent_obj is not None and _gap(incumbent_obj, global_bound) <= controls.gap_target:
            break
        (_, _, _), depth, parent_bound, l, u = heapq.heappop(frontier)
        if incumbent_obj is not None and parent_bound >= incumbent_obj - 1e-9:
            continue
        sol = solve_lp(lp, lower=l, upper=u, engine=controls.engine)
        nodes += 1
        if sol.status != "optimal":
            continue
        bound = sol.objective
        if incumbent_obj is not None and bound >= incumbent_obj - 1e-9:
            continue
        if nodes == 1 or nodes % 10 == 0:
            # activation problems round up well: pin fractional sites and
            # sectors to 1, rebuild colors, and take the result as incumbent
            cand = _round_up_incumbent(model, lp, sol.x, l, u, zs_idx, rb_idx, controls.engine)
            if cand is not None:
                cand = _trim_incumbent(model, lp, cand, l0, u0, binaries, zs_idx, rb_idx, controls.engine)
                obj = model.objective_value(cand)
                if incumbent_obj is None or obj < incumbent_obj - 1e-9:
                    incumbent_obj = obj
                    incumbent_x = cand
                    if log:
                        log(f"node {nodes}: rounding incumbent {obj:.6g} bound {bound:.6g}")
        frac = None
        for tier in tiers:
            frac = _fractional(sol.x, tier)
            if frac is not None:
                break
        if frac is None:
            x = sol.x.copy()
            if len(round_up_safe):
                # cost-free relaxing binaries: rounding up never hurts
                safe = np.fromiter(round_up_safe, dtype=np.int64)
                x[safe] = np.ceil(x[safe] - INT_TOL)
            if len(binaries):
                x[binaries] = np.round(x[binaries])
            x = _trim_incumbent(model, lp, x, l0, u0, binaries, zs_idx, rb_idx, controls.engine)
            obj = model.objective_value(x)
            if incumbent_obj is None or obj < incumbent_obj - 1e-9:
                incumbent_obj = obj
                incumbent_x = x
                if log:
                    log(f"node {nodes}: incumbent {obj:.6g} bound {bound:.6g} "
                        f"gap {_gap(obj, bound):.3f} elapsed {time.time()-t0:.1f}s")
            continue
        j, val = frac
        if log and nodes % 50 == 0:
            inc = f"{incumbent_obj:.6g}" if incumbent_obj is not None else "-"
            log(f"node {nodes}: incumbent {inc} bound {bound:.6g} open {len(frontier)}")
        # dive toward the rounded relaxation first; the sibling branch is
        # explored on backtrack
        first = 1 if val >= 0.5 else 0
        for fix_to in (first, 1 - first):
            cl, cu = l.copy(), u.copy()
            if fix_to == 0:
                cu[j] = 0.0
            else:
                cl[j] = 1.0
            seq += 1
            heapq.heappush(frontier, ((-depth - 1, bound, seq), depth + 1, bound, cl, cu))
        best_bound_seen = min(best_bound_seen, bound)

    elapsed = time.time() - t0
    open_bounds = [item[2] for item in frontier]
    if incumbent_x is None:
        status = "no_solution" if frontier else "infeasible"
        return Plan(status=status, solve_seconds=elapsed, nodes_explored=nodes)
    if frontier:
        final_bound = min(open_bounds)
        final_gap = max(_gap(incumbent_obj, final_bound), 0.0)
        status = "optimal" if final_gap <= 1e-9 else "feasible"
    else:
        final_bound = incumbent_obj
        final_gap = 0.0
        status = "optimal"
    x = _polish(model, lp, incumbent_x, binaries, controls.engine)
    plan = Plan.from_solution(
        model, x, status=status, gap=final_gap, bound=final_bound,
        seconds=elapsed, nodes=nodes,
    )
    violations = model.check(x, tol=1e-6)
    if violations:
        raise RuntimeError(f"incumbent fails feasibility re-check: {violations[:3]}")
    return plan


def _polish(model, lp: CompiledLp, x, binaries, engine="auto"):
    """Re-solve the LP with binaries pinned, cleaning the continuous part."""
    l = lp.lower.copy()
    u = lp.upper.copy()
    if len(binaries):
        l[binaries] = np.round(x[binaries])
        u[binaries] = l[binaries]
    sol = solve_lp(lp, lower=l, upper=u, engine=engine)
    return sol.x if sol.status == "optimal" else x


def _is_integral(x, binaries) -> bool:
    if len(binaries) == 0:
        return True
    return bool(np.all(np.abs(x[binaries] - np.round(x[binaries])) <= INT_TOL))


def _fractional(x, binaries):
    """Most fractional binary (index, value), or None when integral."""
    if len(binaries) == 0:
        return None
    vals = x[binaries]
    dist = np.abs(vals - np.round(vals))
    cand = np.flatnonzero(dist > INT_TOL)
    if len(cand) == 0:
        return None
    closeness = np.abs(vals[cand] - 0.5)
    pick = int(cand[np.lexsort((binaries[cand], closeness))[0]])
    return int(binaries[pick]), float(vals[pick])


def _round_up_incumbent(model, lp, x, l, u, zs_idx, rb_idx, engine):
    """Feasible integral point from a node relaxation by rounding up.

    Fractional site/sector binaries are pinned to 1 (activation only ever
    relaxes the flow constraints; the budget row can refuse, which shows up
    as LP infeasibility).  Polarity binaries are then re-derived by
    2-coloring the links the re-solved LP actually uses.
    """
    cl, cu = l.copy(), u.copy()
    if len(zs_idx):
        val = (x[zs_idx] > INT_TOL).astype(float)
        cl[zs_idx] = np.maximum(cl[zs_idx], val)
        cu[zs_idx] = np.minimum(cu[zs_idx], val)
        if np.any(cl[zs_idx] > cu[zs_idx] + 1e-12):
            return None
    sol = solve_lp(lp, lower=cl, upper=cu, engine=engine)
    if sol.status != "optimal":
        return None
    if _is_integral(sol.x, rb_idx):
        out = sol.x.copy()
        out[zs_idx] = np.round(out[zs_idx])
        if len(rb_idx):
            out[rb_idx] = np.round(out[rb_idx])
        return out if not model.check(out, tol=1e-6) else None
    colors = _two_color(model, sol.x)
    if colors is None:
        return None
    for i, v in enumerate(model.variables):
        if v.role in ("r", "b"):
            sid = v.name[2:-1]
            # inactive sites carry no color (r + b = z = 0)
            want = 0.0
            if sid in colors:
                want = 1.0 if (colors[sid] == "r") == (v.role == "r") else 0.0
            cl[i] = max(cl[i], want)
            cu[i] = min(cu[i], want)
            if cl[i] > cu[i] + 1e-12:
                return None
    sol = solve_lp(lp, lower=cl, upper=cu, engine=engine)
    if sol.status != "optimal" or not _is_integral(sol.x, rb_idx):
        return None
    out = sol.x.copy()
    out[zs_idx] = np.round(out[zs_idx])
    out[rb_idx] = np.round(out[rb_idx])
    return out if not model.check(out, tol=1e-6) else None


def _trim_incumbent(model, lp, x, l0, u0, binaries, zs_idx, rb_idx, engine):
    """Greedy deletion pass over an integral incumbent.

    Tries switching off each costly active site (with its sectors and
    colors), most expensive first.  A trial pins the other active sites and
    sectors, leaves inactive binaries and all colors free so flow can
    reroute, and rounds the re-solved relaxation up again.  Improvements
    are kept; up to three sweeps run to a fixed point.
    """
    sectors_of = {}
    rb_of = {}
    for i, v in enumerate(model.variables):
        if v.role == "s":
            site_id = v.name[2:-1].split(":")[0]
            sectors_of.setdefault(site_id, []).append(i)
        elif v.role in ("r", "b"):
            rb_of.setdefault(v.name[2:-1], []).append(i)

    best = x.copy()
    best_obj = model.objective_value(best)
    for _ in range(3):
        improved = False
        candidates = []
        for j in binaries:
            v = model.variables[j]
            if v.obj > 0 and best[j] > 0.5 and l0[j] < 0.5:
                group = [j]
                if v.role == "z":
                    sid = v.name[2:-1]
                    group += sectors_of.get(sid, [])
                    group += rb_of.get(sid, [])
                candidates.append((v.obj, j, group))
        candidates.sort(key=lambda t: (-t[0], t[1]))
        for _, j, group in candidates:
            if best[j] < 0.5:
                continue
            cl = l0.copy()
            cu = u0.copy()
            keep = zs_idx[(best[zs_idx] > 0.5)]
            cl[keep] = 1.0
            for g in group:
                cl[g] = 0.0
                cu[g] = 0.0
            if np.any(cl > cu + 1e-12):
                continue
            sol = solve_lp(lp, lower=cl, upper=cu, engine=engine)
            if sol.status != "optimal":
                continue
            cand = _round_up_incumbent(model, lp, sol.x, cl, cu, zs_idx, rb_idx, engine)
            if cand is None:
                continue
            obj = model.objective_value(cand)
            if obj < best_obj - 1e-9:
                best = cand
                best_obj = obj
                improved = True
        if not improved:
            break
    return best


def _two_color(model, x):
    """BFS 2-coloring of the active-link graph; None on an odd cycle."""
    edges = []
    nodes = set()
    for i, v in enumerate(model.variables):
        if v.role == "z" and x[i] > 0.5:
            nodes.add(v.name[2:-1])
    colored_sites = {
        v.name[2:-1] for v in model.variables if v.role == "r"
    }
    for i, v in enumerate(model.variables):
        if v.role == "p" and x[i] > 1e-6:
            frm, to = v.name[2:-1].split("->")
            if frm in colored_sites and to in colored_sites:
                edges.append((frm, to))
    adj = {}
    for frm, to in edges:
        adj.setdefault(frm, set()).add(to)
        adj.setdefault(to, set()).add(frm)
    colors = {}
    for start in sorted(nodes & colored_sites):
        if start in colors:
            continue
        colors[start] = "r"
        queue = [start]
        while queue:
            cur = queue.pop()
            for nxt in sorted(adj.get(cur, ())):
                if nxt not in colors:
                    colors[nxt] = "b" if colors[cur] == "r" else "r"
                    queue.append(nxt)
                elif colors[nxt] == colors[cur]:
                    return None
    return colors


def _round_up_safe(model: MipModel) -> set:
    """Zero-cost binaries whose increase can only relax constraints.

    Such variables (typically receiver sectors) never need branching: any
    fractional value rounds up to 1 without losing feasibility or cost.
    """
    cols = {}
    for con in model.constraints:
        for j, coef in con.coeffs.items():
            cols.setdefault(j, []).append((con.sense, coef))
    safe = set()
    for j in model.binaries():
        if model.variables[j].obj != 0:
            continue
        ok = True
        for sense, coef in cols.get(j, ()):
            if sense == "=" or (sense == "<=" and coef > 0) or (sense == ">=" and coef < 0):
                ok = False
                break
        if ok:
            safe.add(j)
    return safe


def _vector_from_plan(model: MipModel, plan: Plan):
    if not plan.values:
        return None
    x = np.zeros(model.n_vars)
    for i, v in enumerate(model.variables):
        if v.name not in plan.values:
            return None
        x[i] = plan.values[v.name]
    return x


# -- Steiner-tree heuristic ----------------------------------------------------


@dataclass
class SteinerTree:
    nodes: list
    edges: list  # (u, v) pairs
    node_cost: float


class UnreachableDemandError(RuntimeError):
    def __init__(self, dem_id):
        super().__init__(f"demand site {dem_id!r} is unreachable from the source")
        self.dem_id = dem_id


def steiner_heuristic(problem: DesignProblem) -> SteinerTree:
    """Grow shortest paths to each demand, span, then prune non-terminals.

    Traversal cost of a hop is the activation cost of the site it leaves
    from (zero for the source and for demand sites).  After every demand is
    attached, a spanning tree of the grown subgraph is pruned of degree-one
    non-terminals.
    """
    adjacency = {s.id: set() for s in problem.sites}
    for a in problem.arcs:
        adjacency[a.frm].add(a.to)
        adjacency[a.to].add(a.frm)
    cost = {
        s.id: (0.0 if s.kind in ("INT", "DEM") else s.cost) for s in problem.sites
    }
    int_id = problem.kind_ids("INT")[0]
    terminals = set(problem.kind_ids("DEM")) | {int_id}
    unreached = set(problem.kind_ids("DEM"))

    tree_nodes = {int_id}
    tree_edges = set()
    while unreached:
        dist, prev = _dijkstra_from_set(adjacency, cost, tree_nodes)
        best = None
        for d in sorted(unreached):
            if dist.get(d, math.inf) < math.inf:
                if best is None or dist[d] < dist[best] - 1e-12:
                    best = d
        if best is None:
            raise UnreachableDemandError(sorted(unreached)[0])
        node = best
        path = [node]
        while prev[node] is not None:
            node = prev[node]
            path.append(node)
        for u, v in zip(path[:-1], path[1:]):
            tree_edges.add(frozenset((u, v)))
        tree_nodes.update(path)
        unreached -= set(path)

    # minimum spanning tree of the grown subgraph, then prune
    edges = sorted(
        (cost[u] + cost[v], u, v)
        for u, v in (sorted(e) for e in tree_edges)
    )
    parent = {v: v for v in tree_nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    mst = set()
    for w, u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            mst.add((u, v))

    nodes = set(tree_nodes)
    degree = {}
    for u, v in mst:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    changed = True
    while changed:
        changed = False
        for v in sorted(nodes):
            if v not in terminals and degree.get(v, 0) == 1:
                nodes.remove(v)
                drop = [e for e in mst if v in e]
                for u, w in drop:
                    mst.remove((u, w))
                    other = u if w == v else w
                    degree[other] -= 1
                degree.pop(v, None)
                changed = True

    total = sum(problem.site(v).cost for v in nodes)
    return SteinerTree(nodes=sorted(nodes), edges=sorted(tuple(sorted(e)) for e in mst),
                       node_cost=float(total))


def _dijkstra_from_set(adjacency, cost, sources):
    dist = {v: 0.0 for v in sources}
    prev = {v: None for v in sources}
    heap = [(0.0, v) for v in sorted(sources)]
    heapq.heapify(heap)
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        step = d + cost[u]
        for v in sorted(adjacency[u]):
            if step < dist.get(v, math.inf) - 1e-15:
                dist[v] = step
                prev[v] = u
                heapq.heappush(heap, (step, v))
    return dist, prev


def two_stage_solve(problem: DesignProblem, controls: SolveControls = None,
                    model: MipModel = None) -> Plan:
    """Fix the Steiner-tree sites active, then let branch and bound do sectors.

    The reported gap is measured against the unrestricted root relaxation,
    so the cost of the heuristic restriction stays visible.
    """
    controls = (controls or SolveControls()).validate()
    tree = steiner_heuristic(problem)
    model = model or build_mip(problem)
    lp = compile_model(model)
    root = solve_lp(lp, engine=controls.engine)
    unrestricted_bound = root.objective if root.status == "optimal" else -math.inf

    lower = lp.lower.copy()
    upper = lp.upper.copy()
    tree_sites = set(tree.nodes)
    for i, v in enumerate(model.variables):
        if v.role != "z":
            continue
        sid = v.name[2:-1]
        if sid in tree_sites:
            lower[i] = 1.0
        elif controls.strict_fixing:
            upper[i] = 0.0
    plan = branch_and_bound(model, controls, lower=lower, upper=upper)
    if plan.status in ("optimal", "feasible") and math.isfinite(unrestricted_bound):
        plan.bound = unrestricted_bound
        plan.gap = max(_gap(plan.objective_value, unrestricted_bound), 0.0)
        if plan.gap > 0 and plan.status == "optimal":
            plan.status = "feasible"
    return plan
