"""Demand-multiplier sensitivity sweeps.

Each run scales every demand by a multiplier, re-solves under the standard
stop rule (gap target or time cap), and reports one row of deployment
metrics, mirroring the throughput-requirement study tables.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .network import DesignProblem, build_mip
from .plans import compute_metrics
from .solve import SolveControls, branch_and_bound, two_stage_solve


@dataclass
class SensitivityRow:
    multiplier: float
    status: str
    solve_seconds: float
    gap: float  # solver stop-rule gap
    gap_vs_root: float  # against the unrestricted relaxation
    objective: float
    antenna_nodes: int
    wifi_aps: int
    dn_sites: int
    fiber_pops: int
    demand_connected: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def scaled_problem(problem: DesignProblem, multiplier: float) -> DesignProblem:
    scaled = copy.deepcopy(problem)
    for s in scaled.sites:
        if s.kind == "DEM":
            s.demand *= multiplier
    return scaled


def run_sensitivity(problem: DesignProblem, multipliers, controls: SolveControls = None,
                    method: str = "two-stage", log=None) -> list:
    controls = controls or SolveControls()
    rows = []
    for mult in multipliers:
        scaled = scaled_problem(problem, mult)
        if method == "two-stage":
            plan = two_stage_solve(scaled, controls)
        else:
            plan = branch_and_bound(build_mip(scaled), controls)
        metrics = compute_metrics(scaled, plan)
        row = SensitivityRow(
            multiplier=mult,
            status=plan.status,
            solve_seconds=round(plan.solve_seconds, 2),
            gap=round(plan.search_gap, 4),
            gap_vs_root=round(plan.gap, 4),
            objective=round(plan.objective_value, 2),
            antenna_nodes=metrics.antenna_nodes_selected,
            wifi_aps=metrics.wifi_aps_selected,
            dn_sites=metrics.dn_sites_selected,
            fiber_pops=metrics.fiber_pops_selected,
            demand_connected=metrics.demand_connected,
        )
        rows.append(row)
        if log:
            log(
                f"mult {mult:g}: {row.status}, {row.solve_seconds:.1f}s, gap {row.gap:.3f}, "
                f"antennas {row.antenna_nodes}, wifi {row.wifi_aps}, "
                f"DNs {row.dn_sites}, POPs {row.fiber_pops}"
            )
    return rows
