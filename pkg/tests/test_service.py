import json
import threading
import time
import urllib.error
import urllib.request

import pytest

from mmwplan.instances import demo_problem
from mmwplan.network import build_mip
from mmwplan.service import PlannerService, make_server
from mmwplan.solve import SolveControls

PORT = 8893


@pytest.fixture(scope="module")
def server():
    service = PlannerService(demo_problem(), SolveControls(gap_target=0.0))
    srv = make_server(service, PORT)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield service
    srv.shutdown()


def req(method, path, body=None):
    data = json.dumps(body).encode() if body is not None else None
    r = urllib.request.Request(
        f"http://127.0.0.1:{PORT}{path}",
        data=data,
        method=method,
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(r) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


@pytest.fixture(autouse=True)
def reset_overrides(server):
    server.overrides.clear()
    yield
    server.overrides.clear()


class TestEndpoints:
    def test_problem_payload(self, server):
        code, prob = req("GET", "/problem")
        assert code == 200
        assert {s["kind"] for s in prob["sites"]} == {"INT", "POP", "DN", "DEM"}
        assert prob["objective"] == "min_cost"

    def test_solve_and_plan(self, server):
        code, out = req("POST", "/solve", {})
        assert code == 200
        assert out["plan"]["status"] == "optimal"
        assert out["plan"]["objective_value"] == pytest.approx(43.0)
        code, plan = req("GET", "/plan")
        assert code == 200
        assert plan["plan"]["objective_value"] == pytest.approx(43.0)
        assert plan["solving"] is False
        assert plan["metrics"]["demand_connected"] == 1

    def test_what_if_exclusion_delta(self, server):
        code, base = req("POST", "/solve", {})
        base_obj = base["plan"]["objective_value"]
        code, out = req("PATCH", "/sites/dn-a", {"state": "excluded"})
        assert code == 200
        code, out = req("POST", "/solve", {})
        assert code == 200
        assert "dn-b" in out["plan"]["active_sites"]
        # enumerated delta: dn-b costs 9 vs dn-a 5
        assert out["plan"]["objective_value"] - base_obj == pytest.approx(4.0)
        code, out = req("PATCH", "/sites/dn-a", {"state": "free"})
        code, out = req("POST", "/solve", {})
        assert out["plan"]["objective_value"] == pytest.approx(base_obj)

    def test_lock_in_forces_active(self, server):
        req("PATCH", "/sites/dn-b", {"state": "locked-in"})
        code, out = req("POST", "/solve", {})
        assert code == 200
        assert "dn-b" in out["plan"]["active_sites"]

    def test_exclude_only_pop_infeasible(self, server):
        req("PATCH", "/sites/pop-001", {"state": "excluded"})
        code, out = req("POST", "/solve", {})
        assert code == 200
        assert out["plan"]["status"] == "infeasible"

    def test_unknown_site_404(self, server):
        code, out = req("PATCH", "/sites/nobody", {"state": "excluded"})
        assert code == 404

    def test_bad_state_400(self, server):
        code, out = req("PATCH", "/sites/dn-a", {"state": "sideways"})
        assert code == 400

    def test_missing_state_400(self, server):
        code, out = req("PATCH", "/sites/dn-a", {})
        assert code == 400

    def test_unknown_path_404(self, server):
        code, _ = req("GET", "/nope")
        assert code == 404
        code, _ = req("POST", "/nope", {})
        assert code == 404

    def test_geojson(self, server):
        req("POST", "/solve", {})
        code, geo = req("GET", "/plan.geojson")
        assert code == 200
        assert geo["type"] == "FeatureCollection"
        active_sites = [
            f for f in geo["features"]
            if f["geometry"]["type"] == "Point" and f["properties"]["active"]
        ]
        assert len(active_sites) >= 3

    def test_deterministic_response(self, server):
        _, a = req("POST", "/solve", {})
        _, b = req("POST", "/solve", {})
        assert a["plan"]["values" if "values" in a["plan"] else "flows"] == \
            b["plan"]["values" if "values" in b["plan"] else "flows"]
        assert a == b

    def test_busy_conflict(self, server):
        # hold the lock as if a solve were running, then poke the API
        assert server._lock.acquire(blocking=False)
        try:
            code, out = req("POST", "/solve", {})
            assert code == 409
        finally:
            server._lock.release()
        code, _ = req("POST", "/solve", {})
        assert code == 200

    def test_budget_override_body(self, server):
        code, out = req(
            "POST", "/solve", {"objective": "max_coverage", "budget": 15.0}
        )
        assert code == 200
        # budget too small for any DN + POP: all demand unserved
        assert out["plan"]["objective_value"] == pytest.approx(1.0)
        assert out["plan"]["unsatisfied"] == {"dem-001": 1.0}

    def test_overrides_do_not_mutate_problem(self, server):
        req("PATCH", "/sites/dn-a", {"state": "excluded"})
        req("POST", "/solve", {})
        _, prob = req("GET", "/problem")
        assert {s["id"] for s in prob["sites"]} >= {"dn-a", "dn-b"}
        assert server.problem.site("dn-a").kind == "DN"
