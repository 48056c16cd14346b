"""Self-contained LP solver: two-phase revised simplex with variable bounds.

Dense basis-inverse updates are fine at desk scale (a few thousand rows).
Dantzig pricing switches to Bland's rule after a pivot budget, which rules
out cycling; the basis inverse is refactorized periodically to keep the
solution within tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MipModel

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
REFACTOR_EVERY = 120


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float
    iterations: int = 0


@dataclass
class CompiledLp:
    """Arrays extracted once from a MipModel, reusable across bound changes."""

    A: np.ndarray
    senses: list
    b: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list
    binary_idx: np.ndarray


def compile_model(model: MipModel) -> CompiledLp:
    n = model.n_vars
    m = len(model.constraints)
    A = np.zeros((m, n))
    b = np.zeros(m)
    senses = []
    for i, con in enumerate(model.constraints):
        for j, coef in con.coeffs.items():
            A[i, j] = coef
        b[i] = con.rhs
        senses.append(con.sense)
    c = np.array([v.obj for v in model.variables], dtype=np.float64)
    lower = np.array([v.lb for v in model.variables], dtype=np.float64)
    upper = np.array([v.ub for v in model.variables], dtype=np.float64)
    return CompiledLp(
        A=A,
        senses=senses,
        b=b,
        c=c,
        lower=lower,
        upper=upper,
        names=[v.name for v in model.variables],
        binary_idx=np.array(model.binaries(), dtype=np.int64),
    )


def solve_lp(model, lower=None, upper=None, engine: str = "simplex") -> LpSolution:
    """Optimal basic solution of the LP relaxation (binaries become [0, 1]).

    ``model`` is a MipModel or a CompiledLp; lower/upper optionally override
    the variable bounds (used for branching and operator overrides).
    ``engine`` picks the built-in simplex (default), "highs" (scipy) for
    large models, or "auto" to switch on row count.
    """
    lp = model if isinstance(model, CompiledLp) else compile_model(model)
    l = lp.lower if lower is None else np.asarray(lower, dtype=np.float64)
    u = lp.upper if upper is None else np.asarray(upper, dtype=np.float64)
    if np.any(l > u + 1e-12):
        return LpSolution(status="infeasible", x=None, objective=np.inf)
    if engine == "auto":
        engine = "highs" if len(lp.senses) > 400 else "simplex"
    if engine == "highs":
        return _solve_highs(lp, l, u)
    if engine != "simplex":
        raise ValueError(f"unknown LP engine {engine!r}")

    m, n = lp.A.shape
    n_slack = sum(1 for s in lp.senses if s != "=")
    N = n + n_slack
    A = np.zeros((m, N))
    A[:, :n] = lp.A
    c = np.zeros(N)
    c[:n] = lp.c
    low = np.full(N, 0.0)
    upp = np.full(N, np.inf)
    low[:n] = l
    upp[:n] = u
    k = n
    slack_col = np.full(m, -1, dtype=np.int64)
    slack_sign = np.ones(m)
    for i, sense in enumerate(lp.senses):
        if sense == "<=":
            A[i, k] = 1.0
            slack_col[i] = k
            k += 1
        elif sense == ">=":
            A[i, k] = -1.0
            slack_col[i] = k
            slack_sign[i] = -1.0
            k += 1
    status, x, iters = _bounded_simplex(A, lp.b.copy(), c, low, upp, slack_col, slack_sign)
    if status != "optimal":
        return LpSolution(status=status, x=None, objective=np.inf, iterations=iters)
    xs = x[:n].copy()
    snap = np.isclose(xs, l, atol=1e-9)
    xs[snap] = l[snap]
    snap = np.isclose(xs, u, atol=1e-9)
    xs[snap] = u[snap]
    xs = np.clip(xs, l, u)
    return LpSolution(status="optimal", x=xs, objective=float(lp.c @ xs), iterations=iters)


def _solve_highs(lp: CompiledLp, l, u) -> LpSolution:
    """scipy/HiGHS backend behind the same contract, for larger models."""
    from scipy.optimize import linprog

    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for i, sense in enumerate(lp.senses):
        if sense == "<=":
            A_ub.append(lp.A[i])
            b_ub.append(lp.b[i])
        elif sense == ">=":
            A_ub.append(-lp.A[i])
            b_ub.append(-lp.b[i])
        else:
            A_eq.append(lp.A[i])
            b_eq.append(lp.b[i])
    res = linprog(
        lp.c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=np.stack([l, u], axis=1),
        method="highs",
    )
    if res.status == 2:
        return LpSolution(status="infeasible", x=None, objective=np.inf, iterations=int(res.nit))
    if res.status == 3:
        return LpSolution(status="unbounded", x=None, objective=-np.inf, iterations=int(res.nit))
    if res.status != 0:
        raise RuntimeError(f"HiGHS backend failed: {res.message}")
    xs = np.clip(res.x, l, u)
    return LpSolution(status="optimal", x=xs, objective=float(lp.c @ xs), iterations=int(res.nit))


def _bounded_simplex(A, b, c, low, upp, slack_col, slack_sign, max_iters=200000):
    """Two-phase primal simplex on equality rows with variable bounds.

    The crash basis takes each inequality row's slack when that is feasible
    at the starting point; only the remaining rows get artificials.
    """
    m, N = A.shape
    # start all columns at a finite bound (every model variable has one)
    at_upper = np.isinf(low)
    x = np.where(at_upper, upp, low)
    if np.any(np.isinf(x)):
        raise ValueError("free variables are not supported")
    x[slack_col[slack_col >= 0]] = 0.0

    resid = b - A @ x
    # rows whose slack can absorb the residual start with the slack basic;
    # the rest (equalities, violated inequalities) get artificials
    basis = np.empty(m, dtype=np.int64)
    diag = np.ones(m)
    art_rows = []
    for i in range(m):
        j = slack_col[i]
        sval = resid[i] * slack_sign[i] if j >= 0 else -1.0
        if j >= 0 and sval >= -FEAS_TOL:
            basis[i] = j
            x[j] = max(sval, 0.0)
            diag[i] = slack_sign[i]
        else:
            art_rows.append(i)
    n_art = len(art_rows)
    if n_art:
        art_cols = np.zeros((m, n_art))
        art_vals = np.empty(n_art)
        for k, i in enumerate(art_rows):
            sign = 1.0 if resid[i] >= 0 else -1.0
            art_cols[i, k] = sign
            diag[i] = sign
            basis[i] = N + k
            art_vals[k] = abs(resid[i])
        A_full = np.hstack([A, art_cols])
        x_full = np.concatenate([x, art_vals])
        low_full = np.concatenate([low, np.zeros(n_art)])
        upp_full = np.concatenate([upp, np.full(n_art, np.inf)])
    else:
        A_full = A
        x_full = x
        low_full = low
        upp_full = upp

    nonbasic_upper = np.zeros(N + n_art, dtype=bool)
    nonbasic_upper[:N] = at_upper
    B_inv = np.diag(diag)  # signed unit basis inverts to itself

    iters1 = 0
    if n_art:
        phase1_cost = np.concatenate([np.zeros(N), np.ones(n_art)])
        status, iters1 = _optimize(
            A_full, b, phase1_cost, low_full, upp_full, x_full, basis, nonbasic_upper, B_inv,
            allow_unbounded=False, max_iters=max_iters,
        )
        if status != "optimal":
            return "infeasible", None, iters1
        if float(phase1_cost @ x_full) > 1e-7:
            return "infeasible", None, iters1
        _drive_out_artificials(A_full, N, basis, nonbasic_upper, B_inv, x_full, b, low_full, upp_full)
        # artificials are done; pin them at zero
        low_full[N:] = 0.0
        upp_full[N:] = 0.0

    phase2_cost = np.concatenate([c, np.zeros(n_art)])
    status, iters2 = _optimize(
        A_full, b, phase2_cost, low_full, upp_full, x_full, basis, nonbasic_upper, B_inv,
        allow_unbounded=True, max_iters=max_iters,
    )
    if status == "unbounded":
        return "unbounded", None, iters1 + iters2
    return "optimal", x_full[:N], iters1 + iters2


def _recompute(A, b, basis, nonbasic_upper, low, upp, x):
    """Refactor the basis inverse and refresh basic values from scratch."""
    B = A[:, basis]
    B_inv = np.linalg.inv(B)
    nb_mask = np.ones(A.shape[1], dtype=bool)
    nb_mask[basis] = False
    x[nb_mask] = np.where(nonbasic_upper[nb_mask], upp[nb_mask], low[nb_mask])
    x[nb_mask] = np.where(np.isinf(x[nb_mask]), 0.0, x[nb_mask])
    x[basis] = B_inv @ (b - A[:, nb_mask] @ x[nb_mask])
    return B_inv


def _optimize(A, b, c, low, upp, x, basis, nonbasic_upper, B_inv, allow_unbounded, max_iters):
    m, total = A.shape
    iters = 0
    bland_after = max(500, 20 * m)
    since_refactor = 0
    while True:
        if iters >= max_iters:
            raise RuntimeError("simplex iteration limit exceeded")
        y = c[basis] @ B_inv
        d = c - y @ A
        nb_mask = np.ones(total, dtype=bool)
        nb_mask[basis] = False
        movable = nb_mask & (low < upp)
        eligible_lo = movable & ~nonbasic_upper & (d < -DUAL_TOL)
        eligible_hi = movable & nonbasic_upper & (d > DUAL_TOL)
        eligible = eligible_lo | eligible_hi
        if not np.any(eligible):
            return "optimal", iters
        idx = np.flatnonzero(eligible)
        if iters < bland_after:
            q = idx[int(np.argmax(np.abs(d[idx])))]
        else:
            q = idx[0]  # Bland: smallest index, no cycling
        sign = 1.0 if not nonbasic_upper[q] else -1.0
        w = B_inv @ A[:, q]
        delta = -sign * w  # rate of change of basic values per unit step

        xb = x[basis]
        t_best = upp[q] - low[q]  # bound flip
        leave_pos = -1
        dec = delta < -FEAS_TOL
        inc = delta > FEAS_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.full(m, np.inf)
            ratios[dec] = (xb[dec] - low[basis][dec]) / (-delta[dec])
            ratios[inc] = (upp[basis][inc] - xb[inc]) / delta[inc]
        if np.any(np.isfinite(ratios)):
            rmin = float(np.min(ratios))
            if rmin < t_best:
                near = np.flatnonzero(ratios <= rmin + 1e-12)
                if iters < bland_after:
                    leave_pos = int(near[int(np.argmax(np.abs(delta[near])))])
                else:
                    leave_pos = int(near[int(np.argmin(basis[near]))])
                t_best = max(rmin, 0.0)
        if np.isinf(t_best):
            if allow_unbounded:
                return "unbounded", iters
            raise RuntimeError("phase-1 subproblem unbounded; inconsistent model")

        x[basis] = xb + delta * t_best
        if leave_pos < 0:
            # entering variable swaps bounds, basis unchanged
            nonbasic_upper[q] = ~nonbasic_upper[q]
            x[q] = upp[q] if nonbasic_upper[q] else low[q]
        else:
            x[q] = (low[q] + t_best) if sign > 0 else (upp[q] - t_best)
            leaving = basis[leave_pos]
            hit_lower = delta[leave_pos] < 0
            x[leaving] = low[leaving] if hit_lower else upp[leaving]
            nonbasic_upper[leaving] = not hit_lower
            basis[leave_pos] = q
            pivot = w[leave_pos]
            row = B_inv[leave_pos, :] / pivot
            B_inv -= np.outer(w, row)
            B_inv[leave_pos, :] = row
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                B_inv[:] = _recompute(A, b, basis, nonbasic_upper, low, upp, x)
                since_refactor = 0
        iters += 1


def _drive_out_artificials(A, n_real, basis, nonbasic_upper, B_inv, x, b, low, upp):
    """Pivot leftover artificial columns out of the basis where possible."""
    for pos in range(len(basis)):
        if basis[pos] < n_real:
            continue
        row = B_inv[pos, :] @ A[:, :n_real]
        nb = np.setdiff1d(np.arange(n_real), basis, assume_unique=False)
        cand = nb[np.abs(row[nb]) > 1e-9]
        movable = cand[low[cand] < upp[cand]]
        if len(movable) == 0:
            continue  # redundant row; artificial stays basic at zero
        q = int(movable[0])
        w = B_inv @ A[:, q]
        pivot = w[pos]
        leaving = basis[pos]
        x[leaving] = 0.0
        nonbasic_upper[leaving] = False
        basis[pos] = q
        prow = B_inv[pos, :] / pivot
        B_inv -= np.outer(w, prow)
        B_inv[pos, :] = prow
        B_inv[:] = _recompute(A, b, basis, nonbasic_upper, low, upp, x)
