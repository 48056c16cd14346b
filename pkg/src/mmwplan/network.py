"""Network design problem and its mixed-integer program.

Sites carry sectors (directional radios or virtual WiFi/fiber/wired
interfaces); arcs connect sector pairs with a throughput and a quality.
A virtual INT super-source injects all traffic through the POPs.  The MIP
selects sites and sectors at minimum cost (or maximum served demand under a
budget) subject to flow balance, activation coupling, CN rules, TDM
capacity, polarity coloring, quality and hop constraints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SITE_KINDS = ("DN", "CN", "POP", "DEM", "INT")


@dataclass
class Sector:
    """One deployable interface on a site; the unit of sector cost."""

    id: str
    site_id: str
    cost: float
    reachable: list  # site ids this sector can talk to
    kind: str = "radio"  # radio | wifi | lte | fiber | wired


@dataclass
class Site:
    id: str
    kind: str
    x: float = 0.0
    y: float = 0.0
    cost: float = 0.0
    demand: float = 0.0
    sectors: list = field(default_factory=list)


@dataclass
class Arc:
    """Directed connection; exactly one sector pair carries it."""

    frm: str
    to: str
    throughput: float
    quality: float
    from_sector: str
    to_sector: str


@dataclass
class DesignProblem:
    sites: list
    arcs: list
    objective: str = "min_cost"  # min_cost | max_coverage
    budget: float = 0.0
    quality_alpha: float = 0.1
    max_hops: float = 10.0
    polarity: bool = True
    merged_tdm: bool = False
    tighten_bigm: bool = False

    def site(self, sid: str) -> Site:
        return self._by_id[sid]

    def __post_init__(self):
        self._by_id = {s.id: s for s in self.sites}
        self._sectors = {sec.id: sec for s in self.sites for sec in s.sectors}

    def sector(self, sec_id: str) -> Sector:
        return self._sectors[sec_id]

    @property
    def total_demand(self) -> float:
        return sum(s.demand for s in self.sites if s.kind == "DEM")

    def kind_ids(self, *kinds) -> list:
        return [s.id for s in self.sites if s.kind in kinds]

    def validate(self):
        ids = [s.id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate site ids")
        ints = self.kind_ids("INT")
        if len(ints) != 1:
            raise ValueError(f"need exactly one INT site, found {len(ints)}")
        if not self.kind_ids("POP"):
            raise ValueError("problem has no POP site")
        if not self.kind_ids("DEM"):
            raise ValueError("problem has no demand site")
        if self.total_demand <= 0:
            raise ValueError("total demand must be positive")
        if not 0 < self.quality_alpha < 1:
            raise ValueError("quality_alpha must lie in (0, 1)")
        if self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        if self.objective not in ("min_cost", "max_coverage"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.objective == "max_coverage" and self.budget < 0:
            raise ValueError("budget must be >= 0")
        for s in self.sites:
            if s.kind not in SITE_KINDS:
                raise ValueError(f"site {s.id}: unknown kind {s.kind!r}")
            if s.demand > 0 and s.kind != "DEM":
                raise ValueError(f"site {s.id}: only DEM sites carry demand")
            for sec in s.sectors:
                for rid in sec.reachable:
                    if rid not in self._by_id:
                        raise ValueError(f"sector {sec.id}: unknown reachable site {rid}")
        known_pairs = set()
        for a in self.arcs:
            if a.frm == a.to:
                raise ValueError(f"self-loop arc at {a.frm}")
            frm_sec = self._sectors.get(a.from_sector)
            to_sec = self._sectors.get(a.to_sector)
            if frm_sec is None or to_sec is None:
                raise ValueError(f"arc {a.frm}->{a.to}: unknown sector")
            if a.to not in frm_sec.reachable:
                raise ValueError(f"arc {a.frm}->{a.to}: target not reachable by sector {a.from_sector}")
            if (a.frm, a.to) in known_pairs:
                raise ValueError(f"duplicate arc {a.frm}->{a.to}")
            known_pairs.add((a.frm, a.to))
        return self


# -- MIP construction ----------------------------------------------------------


@dataclass
class Variable:
    name: str
    kind: str  # "binary" | "continuous"
    lb: float
    ub: float
    role: str  # z | s | f | p | r | b | y
    obj: float = 0.0


@dataclass
class Constraint:
    name: str
    coeffs: dict  # var index -> coefficient
    sense: str  # "<=" | ">=" | "="
    rhs: float


class MipModel:
    """Variables, linear constraints and a minimize objective."""

    def __init__(self):
        self.variables: list = []
        self.constraints: list = []
        self.index: dict = {}

    def add_var(self, name, kind, lb, ub, role, obj=0.0) -> int:
        if name in self.index:
            raise ValueError(f"duplicate variable {name}")
        self.index[name] = len(self.variables)
        self.variables.append(Variable(name, kind, lb, ub, role, obj))
        return self.index[name]

    def add_constraint(self, name, coeffs, sense, rhs):
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"bad sense {sense}")
        self.constraints.append(Constraint(name, dict(coeffs), sense, rhs))

    def var(self, name) -> int:
        return self.index[name]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def binaries(self) -> list:
        return [i for i, v in enumerate(self.variables) if v.kind == "binary"]

    def objective_value(self, x) -> float:
        return float(sum(v.obj * x[i] for i, v in enumerate(self.variables) if v.obj))

    def check(self, x, tol=1e-6) -> list:
        """All constraint and bound violations of a candidate solution."""
        bad = []
        for i, v in enumerate(self.variables):
            if x[i] < v.lb - tol or x[i] > v.ub + tol:
                bad.append(f"bound {v.name}: {x[i]} not in [{v.lb}, {v.ub}]")
        for c in self.constraints:
            lhs = sum(coef * x[i] for i, coef in c.coeffs.items())
            if c.sense == "<=" and lhs > c.rhs + tol:
                bad.append(f"{c.name}: {lhs} > {c.rhs}")
            elif c.sense == ">=" and lhs < c.rhs - tol:
                bad.append(f"{c.name}: {lhs} < {c.rhs}")
            elif c.sense == "=" and abs(lhs - c.rhs) > tol:
                bad.append(f"{c.name}: {lhs} != {c.rhs}")
        return bad

    def to_lp_text(self) -> str:
        """Export in LP text format for cross-checking with external solvers."""

        def term(coef, name, first):
            sign = "-" if coef < 0 else ("" if first else "+")
            mag = abs(coef)
            return f"{sign} {mag:.12g} {name} "

        lines = ["Minimize", " obj: "]
        first = True
        for v in self.variables:
            if v.obj:
                lines[-1] += term(v.obj, v.name, first)
                first = False
        if first:
            lines[-1] += "0 " + self.variables[0].name + " " if self.variables else "0"
        lines.append("Subject To")
        for c in self.constraints:
            row = f" {c.name}: "
            first = True
            for i, coef in sorted(c.coeffs.items()):
                row += term(coef, self.variables[i].name, first)
                first = False
            op = {"<=": "<=", ">=": ">=", "=": "="}[c.sense]
            row += f"{op} {c.rhs:.12g}"
            lines.append(row)
        lines.append("Bounds")
        for v in self.variables:
            ub = "+inf" if math.isinf(v.ub) else f"{v.ub:.12g}"
            lines.append(f" {v.lb:.12g} <= {v.name} <= {ub}")
        binaries = [v.name for v in self.variables if v.kind == "binary"]
        if binaries:
            lines.append("Binaries")
            lines.append(" " + " ".join(binaries))
        lines.append("End")
        return "\n".join(lines) + "\n"


class InvalidQualityError(ValueError):
    """An arc has quality <= 0; its log term is undefined."""


def build_mip(problem: DesignProblem) -> MipModel:
    """Compile the design problem into its mixed-integer program.

    Emits, in order: site/sector activation variables and costs, flow
    balance (the INT row absorbs unserved demand under max_coverage), site
    and sector big-M coupling, CN rules, TDM capacity, polarity coloring,
    and the quality and hop caps.  Demand sites are fixed active via bounds.
    """
    problem.validate()
    for a in problem.arcs:
        if a.quality <= 0:
            raise InvalidQualityError(f"arc {a.frm}->{a.to}: quality {a.quality} (must be > 0)")
        if not a.quality <= 1:
            raise InvalidQualityError(f"arc {a.frm}->{a.to}: quality {a.quality} (must be <= 1)")

    m = MipModel()
    M = problem.total_demand
    dn_pop = set(problem.kind_ids("DN", "POP"))
    dem = problem.kind_ids("DEM")
    int_id = problem.kind_ids("INT")[0]
    max_cov = problem.objective == "max_coverage"

    for s in problem.sites:
        fixed = s.kind == "DEM"
        m.add_var(
            f"z[{s.id}]", "binary", 1.0 if fixed else 0.0, 1.0, "z",
            obj=0.0 if max_cov else s.cost,
        )
    for s in problem.sites:
        for sec in s.sectors:
            m.add_var(f"s[{sec.id}]", "binary", 0.0, 1.0, "s", obj=0.0 if max_cov else sec.cost)
    for a in problem.arcs:
        m.add_var(f"f[{a.frm}->{a.to}]", "continuous", 0.0, M, "f")
    for a in problem.arcs:
        m.add_var(f"p[{a.frm}->{a.to}]", "continuous", 0.0, 1.0, "p")
    if problem.polarity:
        for s in problem.sites:
            if s.id in dn_pop:
                m.add_var(f"r[{s.id}]", "binary", 0.0, 1.0, "r")
                m.add_var(f"b[{s.id}]", "binary", 0.0, 1.0, "b")
    if max_cov:
        for s in problem.sites:
            if s.kind == "DEM":
                m.add_var(f"y[{s.id}]", "continuous", 0.0, s.demand, "y", obj=1.0)

    inbound = {s.id: [] for s in problem.sites}
    outbound = {s.id: [] for s in problem.sites}
    for a in problem.arcs:
        outbound[a.frm].append(a)
        inbound[a.to].append(a)

    # (i) flow balance: inflow - outflow = demand; INT supplies everything.
    # Under max_coverage the DEM rows net out the unserved amount y and the
    # INT row releases it, keeping total conservation exact.
    for s in problem.sites:
        coeffs = {}
        for a in inbound[s.id]:
            coeffs[m.var(f"f[{a.frm}->{a.to}]")] = 1.0
        for a in outbound[s.id]:
            coeffs[m.var(f"f[{a.frm}->{a.to}]")] = coeffs.get(m.var(f"f[{a.frm}->{a.to}]"), 0.0) - 1.0
        if s.kind == "DEM":
            if max_cov:
                coeffs[m.var(f"y[{s.id}]")] = 1.0
            m.add_constraint(f"balance[{s.id}]", coeffs, "=", s.demand)
        elif s.kind == "INT":
            if max_cov:
                # unserved demand stays uninjected at the source
                for d in dem:
                    coeffs[m.var(f"y[{d}]")] = -1.0
            m.add_constraint(f"balance[{s.id}]", coeffs, "=", -M)
        else:
            m.add_constraint(f"balance[{s.id}]", coeffs, "=", 0.0)

    # (ii) a site moves flow only when active
    for s in problem.sites:
        out_cap = sum(min(M, a.throughput) for a in outbound[s.id]) if problem.tighten_bigm else M
        in_cap = sum(min(M, a.throughput) for a in inbound[s.id]) if problem.tighten_bigm else M
        if outbound[s.id]:
            coeffs = {m.var(f"f[{a.frm}->{a.to}]"): 1.0 for a in outbound[s.id]}
            coeffs[m.var(f"z[{s.id}]")] = -out_cap
            m.add_constraint(f"site_out[{s.id}]", coeffs, "<=", 0.0)
        if inbound[s.id]:
            coeffs = {m.var(f"f[{a.frm}->{a.to}]"): 1.0 for a in inbound[s.id]}
            coeffs[m.var(f"z[{s.id}]")] = -in_cap
            m.add_constraint(f"site_in[{s.id}]", coeffs, "<=", 0.0)

    # (iv) sector big-M on flows through each sector, both directions
    sec_out = {}
    sec_in = {}
    for a in problem.arcs:
        sec_out.setdefault(a.from_sector, []).append(a)
        sec_in.setdefault(a.to_sector, []).append(a)
    for s in problem.sites:
        for sec in s.sectors:
            outs = sec_out.get(sec.id, [])
            ins = sec_in.get(sec.id, [])
            cap_out = sum(min(M, a.throughput) for a in outs) if problem.tighten_bigm else M
            cap_in = sum(min(M, a.throughput) for a in ins) if problem.tighten_bigm else M
            if outs:
                coeffs = {m.var(f"f[{a.frm}->{a.to}]"): 1.0 for a in outs}
                coeffs[m.var(f"s[{sec.id}]")] = -cap_out
                m.add_constraint(f"sector_out[{sec.id}]", coeffs, "<=", 0.0)
            if ins:
                coeffs = {m.var(f"f[{a.frm}->{a.to}]"): 1.0 for a in ins}
                coeffs[m.var(f"s[{sec.id}]")] = -cap_in
                m.add_constraint(f"sector_in[{sec.id}]", coeffs, "<=", 0.0)

    # (v) sectors need their site, for DN and POP sites
    for s in problem.sites:
        if s.id in dn_pop:
            for sec in s.sectors:
                m.add_constraint(
                    f"sector_site[{sec.id}]",
                    {m.var(f"s[{sec.id}]"): 1.0, m.var(f"z[{s.id}]"): -1.0},
                    "<=",
                    0.0,
                )

    # (vi) CN rules: at most one backbone-facing and one demand-facing sector
    dem_set = set(dem)
    for s in problem.sites:
        if s.kind != "CN":
            continue
        backbone = [sec for sec in s.sectors if dn_pop & set(sec.reachable)]
        facing_dem = [sec for sec in s.sectors if dem_set & set(sec.reachable)]
        if backbone:
            coeffs = {m.var(f"s[{sec.id}]"): 1.0 for sec in backbone}
            coeffs[m.var(f"z[{s.id}]")] = coeffs.get(m.var(f"z[{s.id}]"), 0.0) - 1.0
            m.add_constraint(f"cn_backbone[{s.id}]", coeffs, "<=", 0.0)
        if facing_dem:
            coeffs = {m.var(f"s[{sec.id}]"): 1.0 for sec in facing_dem}
            coeffs[m.var(f"z[{s.id}]")] = coeffs.get(m.var(f"z[{s.id}]"), 0.0) - 1.0
            m.add_constraint(f"cn_demand[{s.id}]", coeffs, "<=", 0.0)

    # (vii) each demand covered by at most one CN
    cn_by_dem = {}
    for a in problem.arcs:
        if problem.site(a.frm).kind == "CN" and a.to in dem_set:
            cn_by_dem.setdefault(a.to, set()).add(a.frm)
    for d, cns in sorted(cn_by_dem.items()):
        coeffs = {m.var(f"z[{c}]"): 1.0 for c in sorted(cns)}
        m.add_constraint(f"one_cn[{d}]", coeffs, "<=", 1.0)

    # (viii) flow rides the TDM fraction of throughput
    for a in problem.arcs:
        m.add_constraint(
            f"tdm_cap[{a.frm}->{a.to}]",
            {m.var(f"f[{a.frm}->{a.to}]"): 1.0, m.var(f"p[{a.frm}->{a.to}]"): -a.throughput},
            "<=",
            0.0,
        )

    # (ix) sector time shares sum below one, gated on deployment
    for s in problem.sites:
        for sec in s.sectors:
            outs = sec_out.get(sec.id, [])
            ins = sec_in.get(sec.id, [])
            if problem.merged_tdm:
                if outs or ins:
                    coeffs = {}
                    for a in outs:
                        coeffs[m.var(f"p[{a.frm}->{a.to}]")] = 1.0
                    for a in ins:
                        k = m.var(f"p[{a.frm}->{a.to}]")
                        coeffs[k] = coeffs.get(k, 0.0) + 1.0
                    coeffs[m.var(f"s[{sec.id}]")] = -1.0
                    m.add_constraint(f"tdm_share[{sec.id}]", coeffs, "<=", 0.0)
            else:
                if outs:
                    coeffs = {m.var(f"p[{a.frm}->{a.to}]"): 1.0 for a in outs}
                    coeffs[m.var(f"s[{sec.id}]")] = -1.0
                    m.add_constraint(f"tdm_out[{sec.id}]", coeffs, "<=", 0.0)
                if ins:
                    coeffs = {m.var(f"p[{a.frm}->{a.to}]"): 1.0 for a in ins}
                    coeffs[m.var(f"s[{sec.id}]")] = -1.0
                    m.add_constraint(f"tdm_in[{sec.id}]", coeffs, "<=", 0.0)

    # (x) polarity: deployed DN/POP sites take exactly one color and
    # communicating sites differ
    if problem.polarity:
        for s in problem.sites:
            if s.id in dn_pop:
                m.add_constraint(
                    f"color[{s.id}]",
                    {
                        m.var(f"r[{s.id}]"): 1.0,
                        m.var(f"b[{s.id}]"): 1.0,
                        m.var(f"z[{s.id}]"): -1.0,
                    },
                    "=",
                    0.0,
                )
        for a in problem.arcs:
            if a.frm in dn_pop and a.to in dn_pop:
                m.add_constraint(
                    f"pol_r[{a.frm}->{a.to}]",
                    {
                        m.var(f"p[{a.frm}->{a.to}]"): 1.0,
                        m.var(f"r[{a.frm}]"): -1.0,
                        m.var(f"r[{a.to}]"): -1.0,
                    },
                    "<=",
                    0.0,
                )
                m.add_constraint(
                    f"pol_b[{a.frm}->{a.to}]",
                    {
                        m.var(f"p[{a.frm}->{a.to}]"): 1.0,
                        m.var(f"b[{a.frm}]"): -1.0,
                        m.var(f"b[{a.to}]"): -1.0,
                    },
                    "<=",
                    0.0,
                )

    # (xi) + (xii) service quality and hop budget over backbone arcs
    backbone_kinds = {"CN", "DN", "POP"}
    quality_coeffs = {}
    hops_coeffs = {}
    for a in problem.arcs:
        if problem.site(a.frm).kind in backbone_kinds and problem.site(a.to).kind in backbone_kinds:
            fi = m.var(f"f[{a.frm}->{a.to}]")
            quality_coeffs[fi] = math.log(a.quality) / M
            hops_coeffs[fi] = 1.0 / M
    if quality_coeffs:
        m.add_constraint("quality", quality_coeffs, ">=", math.log(1.0 - problem.quality_alpha))
    if hops_coeffs:
        m.add_constraint("hops", hops_coeffs, "<=", problem.max_hops)

    if max_cov:
        coeffs = {}
        for s in problem.sites:
            if s.cost:
                coeffs[m.var(f"z[{s.id}]")] = s.cost
            for sec in s.sectors:
                if sec.cost:
                    coeffs[m.var(f"s[{sec.id}]")] = sec.cost
        m.add_constraint("budget", coeffs, "<=", problem.budget)

    return m
