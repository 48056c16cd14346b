"""HTTP what-if service for the operator UI.

Single-session by design: one problem, one current plan, per-site overrides
(lock in or exclude).  Solves run synchronously inside the POST request and
are serialized; a second solve while busy gets 409.  Overrides never touch
the problem itself, only variable bounds layered onto the model.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .network import build_mip
from .plans import Plan, compute_metrics, plan_geojson
from .sensitivity import scaled_problem
from .solve import SolveControls, branch_and_bound
from .topology import problem_to_dict

VALID_STATES = ("locked-in", "excluded", "free")


class PlannerService:
    def __init__(self, problem, controls: SolveControls = None):
        self.problem = problem
        self.controls = controls or SolveControls()
        self.overrides = {}  # site id -> state
        self.plan = None
        self.metrics = None
        self.solving = False
        self._lock = threading.Lock()
        self._ids = {s.id for s in problem.sites}

    # -- session operations ----------------------------------------------

    def set_override(self, site_id: str, state: str):
        if site_id not in self._ids:
            raise KeyError(site_id)
        if state not in VALID_STATES:
            raise ValueError(f"state must be one of {VALID_STATES}")
        if state == "free":
            self.overrides.pop(site_id, None)
        else:
            self.overrides[site_id] = state
        return {"id": site_id, "state": state}

    def solve(self, body: dict) -> dict:
        if not self._lock.acquire(blocking=False):
            raise BusyError()
        try:
            self.solving = True
            problem = self.problem
            mult = float(body.get("demand_multiplier", 1.0))
            if mult != 1.0:
                problem = scaled_problem(problem, mult)
            if "objective" in body or "budget" in body:
                problem = scaled_problem(problem, 1.0)  # deep copy
                if "objective" in body:
                    problem.objective = str(body["objective"])
                if "budget" in body:
                    problem.budget = float(body["budget"])
                problem.validate()
            controls = SolveControls(
                gap_target=float(body.get("gap_target", self.controls.gap_target)),
                time_limit=float(body.get("time_limit", self.controls.time_limit)),
                engine=self.controls.engine,
            )
            model = build_mip(problem)
            lower = None
            upper = None
            if self.overrides:
                from .simplex import compile_model

                lp = compile_model(model)
                lower = lp.lower.copy()
                upper = lp.upper.copy()
                for i, v in enumerate(model.variables):
                    if v.role != "z":
                        continue
                    state = self.overrides.get(v.name[2:-1])
                    if state == "locked-in":
                        lower[i] = 1.0
                    elif state == "excluded":
                        upper[i] = 0.0
                if np.any(lower > upper):
                    self.plan = Plan(status="infeasible")
                    self.metrics = compute_metrics(problem, self.plan)
                    return self._plan_payload()
            plan = branch_and_bound(model, controls, lower=lower, upper=upper)
            self.plan = plan
            self.metrics = compute_metrics(problem, plan)
            return self._plan_payload()
        finally:
            self.solving = False
            self._lock.release()

    def _plan_payload(self) -> dict:
        return {
            "plan": self.plan.to_dict() if self.plan else None,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "solving": self.solving,
            "overrides": dict(self.overrides),
        }

    def payload(self, path: str):
        if path == "/problem":
            return problem_to_dict(self.problem)
        if path == "/plan":
            return self._plan_payload()
        if path == "/plan.geojson":
            plan = self.plan or Plan(status="no_solution")
            return plan_geojson(self.problem, plan)
        return None

    def serve_forever(self, port: int):
        server = make_server(self, port)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()


class BusyError(RuntimeError):
    pass


def make_server(service: PlannerService, port: int) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, code: int, payload):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.end_headers()
            self.wfile.write(body)

        def _body(self):
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            raw = self.rfile.read(length)
            return json.loads(raw.decode("utf-8"))

        def do_OPTIONS(self):
            self._send(204, {})

        def do_GET(self):
            payload = service.payload(self.path)
            if payload is None:
                self._send(404, {"error": f"unknown path {self.path}"})
            else:
                self._send(200, payload)

        def do_POST(self):
            if self.path != "/solve":
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                body = self._body()
            except (ValueError, json.JSONDecodeError):
                self._send(400, {"error": "invalid JSON body"})
                return
            try:
                self._send(200, service.solve(body))
            except BusyError:
                self._send(409, {"error": "solve already in progress"})
            except (ValueError, KeyError) as exc:
                self._send(400, {"error": str(exc)})

        def do_PATCH(self):
            if not self.path.startswith("/sites/"):
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            site_id = self.path[len("/sites/"):]
            try:
                body = self._body()
            except (ValueError, json.JSONDecodeError):
                self._send(400, {"error": "invalid JSON body"})
                return
            state = body.get("state")
            if state is None:
                self._send(400, {"error": "body must carry a 'state' field"})
                return
            try:
                self._send(200, service.set_override(site_id, str(state)))
            except KeyError:
                self._send(404, {"error": f"unknown site {site_id!r}"})
            except ValueError as exc:
                self._send(400, {"error": str(exc)})

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)
