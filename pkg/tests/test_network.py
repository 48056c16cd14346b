import itertools
import json
import math

import numpy as np
import pytest

from mmwplan.instances import demo_problem
from mmwplan.los import LosEdge
from mmwplan.network import (
    Arc,
    DesignProblem,
    InvalidQualityError,
    Sector,
    Site,
    build_mip,
)
from mmwplan.plans import Plan, compute_metrics, plan_geojson
from mmwplan.poles import SiteCandidate
from mmwplan.simplex import solve_lp
from mmwplan.topology import NetworkConfig, build_network, load_problem, save_problem, uniform_demand_grid


def cand(sid, x, y):
    return SiteCandidate(id=sid, x=x, y=y, mount_z=8.0)


def edge(a, b, d):
    return LosEdge(site_a=a, site_b=b, distance=d, obstruction_count=0, height_used=8.0)


class TestBuildNetwork:
    def test_chain_construction(self):
        sites = [cand("dn-1", 50, 0)]
        edges = [edge("dn-1", "pop-1", 50.0)]
        pops = [{"id": "pop-1", "x": 0.0, "y": 0.0, "cost": 900.0}]
        demands = [{"id": "dem-1", "x": 80.0, "y": 0.0, "demand": 1.0}]
        problem = build_network(sites, edges, pops, demands)
        kinds = {s.id: s.kind for s in problem.sites}
        assert kinds == {"int": "INT", "pop-1": "POP", "dn-1": "DN", "dem-1": "DEM"}
        pairs = {(a.frm, a.to) for a in problem.arcs}
        assert ("int", "pop-1") in pairs
        assert ("pop-1", "dn-1") in pairs and ("dn-1", "pop-1") in pairs
        assert ("dn-1", "dem-1") in pairs

    def test_azimuth_sector_grouping(self):
        # neighbors at 10 and 200 degrees land in two quadrant sectors
        sites = [cand("dn-1", 0, 0), cand("dn-2", 98.5, 17.4), cand("dn-3", -94.0, -34.2)]
        edges = [edge("dn-1", "dn-2", 100.0), edge("dn-1", "dn-3", 100.0)]
        pops = [{"id": "dn-2", "cost": 500.0}]
        demands = [{"id": "dem-1", "x": 5.0, "y": 5.0, "demand": 1.0}]
        problem = build_network(sites, edges, pops, demands)
        dn1 = problem.site("dn-1")
        radio = [s for s in dn1.sectors if s.kind == "radio"]
        assert len(radio) == 2

    def test_uniform_grid_demands(self):
        grid = uniform_demand_grid(0, 0, 120, 120, spacing=30.0, demand=1.0)
        assert len(grid) == 25

    def test_pop_matched_by_proximity(self):
        sites = [cand("dn-1", 50, 0), cand("dn-2", 10, 0)]
        edges = [edge("dn-1", "dn-2", 40.0)]
        pops = [{"x": 10.5, "y": 0.5, "cost": 700.0}]
        demands = [{"id": "dem-1", "x": 60.0, "y": 0.0, "demand": 0.5}]
        problem = build_network(sites, edges, pops, demands)
        assert problem.site("dn-2").kind == "POP"
        assert problem.site("dn-2").cost == 700.0

    def test_no_pop_rejected(self):
        with pytest.raises(ValueError):
            build_network([cand("dn-1", 0, 0)], [], [], [{"id": "d", "x": 0, "y": 0, "demand": 1}])

    def test_out_of_range_demand_is_infeasible(self):
        sites = [cand("dn-1", 0, 0)]
        pops = [{"id": "dn-1", "cost": 500.0}]
        demands = [
            {"id": "dem-close", "x": 20.0, "y": 0.0, "demand": 1.0},
            {"id": "dem-far", "x": 200.0, "y": 0.0, "demand": 1.0},
        ]
        problem = build_network(sites, [], pops, demands)
        feeders = {a.to for a in problem.arcs}
        assert "dem-close" in feeders and "dem-far" not in feeders
        assert solve_lp(build_mip(problem)).status == "infeasible"


class TestBuildMip:
    def test_variable_role_counts(self):
        problem = demo_problem()
        model = build_mip(problem)
        by_role = {}
        for v in model.variables:
            by_role[v.role] = by_role.get(v.role, 0) + 1
        n_sites = len(problem.sites)
        n_arcs = len(problem.arcs)
        n_dnpop = len(problem.kind_ids("DN", "POP"))
        n_sectors = sum(len(s.sectors) for s in problem.sites)
        assert by_role["z"] == n_sites
        assert by_role["s"] == n_sectors
        assert by_role["f"] == n_arcs
        assert by_role["p"] == n_arcs
        assert by_role["r"] == n_dnpop
        assert by_role["b"] == n_dnpop
        assert "y" not in by_role

    def test_max_coverage_adds_y(self):
        problem = demo_problem(objective="max_coverage", budget=100.0)
        model = build_mip(problem)
        ys = [v for v in model.variables if v.role == "y"]
        dems = problem.kind_ids("DEM")
        assert len(ys) == len(dems)
        for v in ys:
            assert v.ub == problem.site(v.name[2:-1]).demand
        assert any(c.name == "budget" for c in model.constraints)

    def test_chain_forced_active_is_feasible(self):
        problem = demo_problem()
        model = build_mip(problem)
        from mmwplan.simplex import compile_model

        lp = compile_model(model)
        lower = lp.lower.copy()
        for i, v in enumerate(model.variables):
            if v.kind == "binary" and v.role not in ("r", "b"):
                lower[i] = 1.0
        sol = solve_lp(lp, lower=lower)
        assert sol.status == "optimal"
        f_int = sol.x[model.var("f[int->pop-001]")]
        assert f_int == pytest.approx(problem.total_demand)

    def test_demand_z_fixed(self):
        model = build_mip(demo_problem())
        v = model.variables[model.var("z[dem-001]")]
        assert v.lb == 1.0 and v.ub == 1.0

    def test_flow_balance_signs(self):
        problem = demo_problem()
        model = build_mip(problem)
        balance = {c.name: c for c in model.constraints if c.name.startswith("balance")}
        assert balance["balance[int]"].rhs == -problem.total_demand
        assert balance["balance[dem-001]"].rhs == problem.site("dem-001").demand
        assert balance["balance[dn-a]"].rhs == 0.0

    def test_quality_trivial_when_alpha_small_and_q_one(self):
        problem = demo_problem()
        for a in problem.arcs:
            a.quality = 1.0
        problem.quality_alpha = 1e-12
        model = build_mip(problem)
        qrow = next(c for c in model.constraints if c.name == "quality")
        assert all(abs(coef) < 1e-9 for coef in qrow.coeffs.values())
        assert qrow.rhs == pytest.approx(0.0, abs=1e-9)

    def test_invalid_quality_rejected(self):
        problem = demo_problem()
        problem.arcs[1].quality = 0.0
        with pytest.raises(InvalidQualityError):
            build_mip(problem)

    def test_polarity_triangle_infeasible(self):
        # three mutually linked active DNs with forced time shares cannot 2-color
        sites = [Site(id="int", kind="INT"), Site(id="pop-x", kind="POP", cost=1.0)]
        dns = []
        for k in range(3):
            dn = Site(id=f"dn-{k}", kind="DN", x=k * 10.0, cost=1.0)
            dns.append(dn)
        dem = Site(id="dem-1", kind="DEM", demand=1.0)
        sites += dns + [dem]
        sites[0].sectors = [Sector("int:fiber", "int", 0.0, ["pop-x"], "fiber")]
        sites[1].sectors = [Sector("pop-x:fiber", "pop-x", 0.0, ["int"], "fiber"),
                            Sector("pop-x:r0", "pop-x", 1.0, ["dn-0"], "radio")]
        arcs = [Arc("int", "pop-x", 10.0, 1.0, "int:fiber", "pop-x:fiber"),
                Arc("pop-x", "dn-0", 10.0, 1.0, "pop-x:r0", "dn-0:rp")]
        for k, dn in enumerate(dns):
            dn.sectors.append(Sector(f"dn-{k}:rp", f"dn-{k}", 1.0, ["pop-x"], "radio"))
            peers = [f"dn-{j}" for j in range(3) if j != k]
            dn.sectors.append(Sector(f"dn-{k}:ring", f"dn-{k}", 1.0, peers, "radio"))
        for i, j in itertools.permutations(range(3), 2):
            arcs.append(Arc(f"dn-{i}", f"dn-{j}", 10.0, 1.0, f"dn-{i}:ring", f"dn-{j}:ring"))
        dns[2].sectors.append(Sector("dn-2:wifi", "dn-2", 1.0, ["dem-1"], "wifi"))
        dem.sectors = [Sector("dem-1:rx", "dem-1", 0.0, ["dn-2"], "wired")]
        arcs.append(Arc("dn-2", "dem-1", 10.0, 1.0, "dn-2:wifi", "dem-1:rx"))
        problem = DesignProblem(sites=sites, arcs=arcs)
        model = build_mip(problem)
        from mmwplan.simplex import compile_model

        lp = compile_model(model)
        lower = lp.lower.copy()
        # force every site active and positive time share on the ring
        for i, v in enumerate(model.variables):
            if v.role == "z":
                lower[i] = 1.0
            if v.role == "p" and "dn-" in v.name and "dem" not in v.name and "pop" not in v.name:
                lower[i] = 0.1
        # oracle: all 8 colorings of the triangle violate some pair
        for coloring in itertools.product((0, 1), repeat=3):
            ok = all(coloring[i] != coloring[j] for i, j in itertools.combinations(range(3), 2))
            assert not ok
        # relaxed colors are continuous in [0,1]; integral solve must fail
        from mmwplan.solve import SolveControls, branch_and_bound

        plan = branch_and_bound(model, SolveControls(gap_target=0.0), lower=lower)
        assert plan.status == "infeasible"

    def test_merged_tdm_single_row(self):
        problem = demo_problem()
        problem.merged_tdm = True
        model = build_mip(problem)
        names = [c.name for c in model.constraints]
        assert any(n.startswith("tdm_share") for n in names)
        assert not any(n.startswith("tdm_out") for n in names)

    def test_lp_export_parses(self):
        model = build_mip(demo_problem())
        text = model.to_lp_text()
        assert text.startswith("Minimize")
        assert "Subject To" in text and "Binaries" in text and text.rstrip().endswith("End")


class TestMetrics:
    def _solved_demo(self, exclude=None):
        from mmwplan.solve import SolveControls, branch_and_bound
        from mmwplan.simplex import compile_model

        problem = demo_problem()
        model = build_mip(problem)
        lower = upper = None
        if exclude:
            lp = compile_model(model)
            lower, upper = lp.lower.copy(), lp.upper.copy()
            upper[model.var(f"z[{exclude}]")] = 0.0
        plan = branch_and_bound(model, SolveControls(gap_target=0.0), lower=lower, upper=upper)
        return problem, plan

    def test_chain_has_no_alternate_paths(self):
        problem, plan = self._solved_demo(exclude="dn-b")
        metrics = compute_metrics(problem, plan)
        assert metrics.demand_connected == 1
        assert metrics.demand_alt_paths == 0

    def test_two_disjoint_paths_count(self):
        problem, plan = self._solved_demo()
        # lock both DNs active by solving with both forced
        from mmwplan.solve import SolveControls, branch_and_bound
        from mmwplan.simplex import compile_model

        model = build_mip(problem)
        lp = compile_model(model)
        lower = lp.lower.copy()
        lower[model.var("z[dn-a]")] = 1.0
        lower[model.var("z[dn-b]")] = 1.0
        plan = branch_and_bound(model, SolveControls(gap_target=0.0), lower=lower)
        metrics = compute_metrics(problem, plan)
        assert metrics.demand_alt_paths == 1
        assert metrics.demand_alt_paths_pct == 100.0

    def test_selected_never_exceeds_possible(self, city=None):
        problem, plan = self._solved_demo()
        metrics = compute_metrics(problem, plan)
        assert metrics.dn_sites_selected <= metrics.dn_sites_possible
        assert metrics.antenna_nodes_selected <= metrics.antenna_nodes_possible
        assert metrics.wifi_aps_selected <= metrics.wifi_aps_possible
        assert metrics.demand_connected <= metrics.demand_possible

    def test_geojson_shape(self):
        problem, plan = self._solved_demo()
        geo = plan_geojson(problem, plan)
        assert geo["type"] == "FeatureCollection"
        kinds = {f["geometry"]["type"] for f in geo["features"]}
        assert kinds == {"Point", "LineString"}
        assert len(geo["features"]) == len(problem.sites) + len(problem.arcs)


class TestProblemIo:
    def test_roundtrip(self, tmp_path):
        problem = demo_problem(objective="max_coverage", budget=55.0)
        path = tmp_path / "problem.json"
        save_problem(problem, path)
        back = load_problem(path)
        assert [s.id for s in back.sites] == [s.id for s in problem.sites]
        assert len(back.arcs) == len(problem.arcs)
        assert back.objective == "max_coverage"
        assert back.budget == 55.0
        m1 = build_mip(problem)
        m2 = build_mip(back)
        assert [v.name for v in m1.variables] == [v.name for v in m2.variables]
        assert len(m1.constraints) == len(m2.constraints)

    def test_validation_rejects_duplicate_sites(self):
        s = Site(id="x", kind="POP", cost=1.0)
        with pytest.raises(ValueError):
            DesignProblem(sites=[s, s], arcs=[]).validate()
