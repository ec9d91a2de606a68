"""Embedded LP engine and branch-and-bound over the scenario indicators.

The LP kernel delegates pivoting to scipy's HiGHS backend; second-order cone
rows are handled by supporting-hyperplane refinement so the whole engine stays
linear.  Branch and bound explores best-bound first, branches on the most
fractional indicator, and runs an optional separation loop at the root node
only.
"""

import heapq
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import NoIncumbent, NumericalFailure
from .formulation import EQ, GE, LE, BINARY, LinearRow, MipModel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
BUDGET_EXHAUSTED = "budget_exhausted"

INTEGRALITY_TOL = 1e-6
FEASIBILITY_TOL = 1e-8
CONE_TOL = 1e-7
GAP_TARGET = 1e-6

_LINPROG_OPTS = {
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective: float
    primal: dict
    row_activities: tuple


@dataclass
class SolveReport:
    """Mirror of the benchmark statistics: bounds, gap, node/cut counts, timing."""

    status: str
    upper_bound: float
    lower_bound: float
    nodes: int
    cuts_added: int
    root_value: float
    wall_time: float
    solution: dict = field(default_factory=dict)

    @property
    def gap_percent(self) -> float:
        return gap_percent(self.upper_bound, self.lower_bound)

    @property
    def root_gap_percent(self) -> float:
        return gap_percent(self.upper_bound, self.root_value)


def gap_percent(ub: float, lb: float) -> float:
    """(UB - LB) / LB * 100 with a guard for a vanishing denominator."""
    if not np.isfinite(ub) or not np.isfinite(lb):
        return np.inf
    diff = ub - lb
    if abs(lb) < 1e-12:
        return 0.0 if abs(diff) < 1e-12 else np.inf
    return diff / lb * 100.0


class _Workspace:
    """Dense arrays compiled from a MipModel, shared across node LP solves."""

    def __init__(self, model: MipModel):
        self.model = model
        self.names = [v.name for v in model.variables]
        self.index = {n: j for j, n in enumerate(self.names)}
        n = len(self.names)
        self.c = np.zeros(n)
        for name, coef in model.objective.items():
            self.c[self.index[name]] = coef
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for row in model.linear_rows:
            vec = self._vector(row.coeffs)
            if row.sense == GE:
                ub_rows.append(-vec)
                ub_rhs.append(-row.rhs)
            elif row.sense == LE:
                ub_rows.append(vec)
                ub_rhs.append(row.rhs)
            elif row.sense == EQ:
                eq_rows.append(vec)
                eq_rhs.append(row.rhs)
            else:
                raise ValueError(f"unknown sense {row.sense!r}")
        self.A_ub = np.array(ub_rows) if ub_rows else np.empty((0, n))
        self.b_ub = np.array(ub_rhs)
        self.A_eq = np.array(eq_rows) if eq_rows else None
        self.b_eq = np.array(eq_rhs) if eq_rows else None
        self.base_bounds = [(v.lb, v.ub) for v in model.variables]
        # cone data: out.x >= scale * ||Mx + m||_2 per cone row
        self.cones = []
        for cone in model.cone_rows:
            out = self._vector(cone.out)
            mat = np.array([self._vector(coeffs) for coeffs, _ in cone.inputs])
            const = np.array([c for _, c in cone.inputs])
            self.cones.append((out, cone.scale, mat, const))
        # accumulated rows: supporting hyperplanes and root cuts (<= form)
        self.extra_rows = []
        self.extra_rhs = []
        for out, scale, mat, const in self.cones:
            # coordinate supports out >= +-scale*v_k keep early iterates bounded
            for kk in range(mat.shape[0]):
                for sign in (1.0, -1.0):
                    self.extra_rows.append(sign * scale * mat[kk] - out)
                    self.extra_rhs.append(-sign * scale * const[kk])
            self.extra_rows.append(-out)
            self.extra_rhs.append(0.0)

    def _vector(self, coeffs):
        vec = np.zeros(len(self.names))
        for name, coef in coeffs.items():
            vec[self.index[name]] = coef
        return vec

    def add_row_le(self, vec, rhs):
        self.extra_rows.append(np.asarray(vec, dtype=float))
        self.extra_rhs.append(float(rhs))

    def add_linear_row(self, row: LinearRow):
        vec = self._vector(row.coeffs)
        if row.sense == GE:
            self.add_row_le(-vec, -row.rhs)
        elif row.sense == LE:
            self.add_row_le(vec, row.rhs)
        else:
            raise ValueError("cut rows must be inequalities")

    def bounds(self, overrides=None):
        if not overrides:
            return list(self.base_bounds)
        out = list(self.base_bounds)
        for name, pair in overrides.items():
            out[self.index[name]] = pair
        return out

    def solve(self, overrides=None):
        """LP relaxation with cone refinement; returns (status, obj, x array)."""
        bounds = [
            (None if lo == -np.inf else lo, None if hi == np.inf else hi)
            for lo, hi in self.bounds(overrides)
        ]
        for _ in range(200):
            if self.extra_rows:
                A = np.vstack([self.A_ub, np.array(self.extra_rows)])
                b = np.concatenate([self.b_ub, np.array(self.extra_rhs)])
            else:
                A, b = self.A_ub, self.b_ub
            res = linprog(
                c=self.c,
                A_ub=A if A.size else None,
                b_ub=b if b.size else None,
                A_eq=self.A_eq,
                b_eq=self.b_eq,
                bounds=bounds,
                method="highs",
                options=_LINPROG_OPTS,
            )
            if res.status == 2:
                return INFEASIBLE, np.inf, None
            if res.status == 3:
                return UNBOUNDED, -np.inf, None
            if res.status != 0:
                raise NumericalFailure(f"LP engine failed: {res.message}")
            x = res.x
            worst = 0.0
            for out, scale, mat, const in self.cones:
                v = mat @ x + const
                norm = float(np.sqrt(v @ v))
                lhs = float(out @ x)
                viol = scale * norm - lhs
                if viol > worst:
                    worst = viol
                if viol > CONE_TOL and norm > 0.0:
                    g = v / norm
                    self.add_row_le(scale * (g @ mat) - out, -scale * float(g @ const))
            if worst <= CONE_TOL:
                return OPTIMAL, float(res.fun), x
        raise NumericalFailure("cone refinement did not converge")


def solve_lp(model: MipModel, bound_overrides=None) -> LpSolution:
    """Exact optimum of the continuous relaxation (binaries relaxed to [0, 1]).

    Cone rows are refined by supporting hyperplanes until the cone violation
    is below 1e-7.
    """
    ws = _Workspace(model)
    status, obj, x = ws.solve(bound_overrides)
    if x is None:
        return LpSolution(status, obj, {}, ())
    primal = {name: float(val) for name, val in zip(ws.names, x)}
    acts = tuple(
        float(sum(coef * primal[name] for name, coef in row.coeffs.items()))
        for row in model.linear_rows
    )
    return LpSolution(status, obj, primal, acts)


def _most_fractional(names, x, index):
    best, best_score = None, INTEGRALITY_TOL
    for name in names:
        val = x[index[name]]
        score = min(val - np.floor(val), np.ceil(val) - val)
        if score > best_score:
            best, best_score = name, score
    return best


def solve_mip(
    model: MipModel,
    cuts=None,
    node_limit: int = 10**6,
    time_limit: float = 600.0,
    log=None,
    gap_target: float = GAP_TARGET,
    max_cut_rounds: int = 100,
) -> SolveReport:
    """Branch and bound on the indicator variables with a root cut loop.

    cuts, when given, must expose separate(primal_dict) -> list[LinearRow];
    it is polled to quiescence at the root node only.  Always returns a
    report; a blown node or time budget is reported as budget_exhausted with
    the bounds reached.
    """
    t0 = time.perf_counter()
    ws = _Workspace(model)
    binaries = list(model.binaries)

    def emit(nodes, lb, ub, ncuts):
        if log is not None:
            log(
                f"node={nodes} lb={lb:.10g} ub={ub:.10g} "
                f"gap={gap_percent(ub, lb):.6g} cuts={ncuts}"
            )

    status, root_obj, x = ws.solve()
    cuts_added = 0
    if status != OPTIMAL:
        report_status = INFEASIBLE if status == INFEASIBLE else UNBOUNDED
        bound = np.inf if status == INFEASIBLE else -np.inf
        return SolveReport(
            report_status, np.inf, bound, 0, 0, bound, time.perf_counter() - t0
        )
    if cuts is not None:
        for _ in range(max_cut_rounds):
            primal = {name: float(v) for name, v in zip(ws.names, x)}
            violated = cuts.separate(primal)
            if not violated:
                break
            for row in violated:
                ws.add_linear_row(row)
            cuts_added += len(violated)
            status, root_obj, x = ws.solve()
            if status != OPTIMAL:
                # a valid cut cannot make the MIP infeasible, but the LP
                # relaxation can close; stop cutting and let search decide
                break
    root_value = root_obj if status == OPTIMAL else np.inf

    incumbent = {}
    ub = np.inf
    nodes = 0
    seq = 0
    heap = []
    if status == OPTIMAL:
        heapq.heappush(heap, (root_obj, seq, {}))
    report_status = OPTIMAL
    lb = root_value
    emit(nodes, lb, ub, cuts_added)

    while heap:
        if nodes >= node_limit or time.perf_counter() - t0 > time_limit:
            report_status = BUDGET_EXHAUSTED
            break
        bound, _, fixed = heapq.heappop(heap)
        lb = bound
        if ub < np.inf and bound >= ub - gap_target * max(1.0, abs(ub)):
            lb = ub
            break
        nodes += 1
        overrides = {name: (val, val) for name, val in fixed.items()}
        status, obj, x = ws.solve(overrides)
        if status != OPTIMAL or obj >= ub - gap_target * max(1.0, abs(ub)):
            continue
        branch_var = _most_fractional(binaries, x, ws.index)
        if branch_var is None:
            ub = obj
            incumbent = {name: float(v) for name, v in zip(ws.names, x)}
            for name in binaries:
                incumbent[name] = float(round(incumbent[name]))
            emit(nodes, lb, ub, cuts_added)
            continue
        for val in (0.0, 1.0):
            child = dict(fixed)
            child[branch_var] = val
            seq += 1
            heapq.heappush(heap, (obj, seq, child))
        if nodes % 50 == 0:
            emit(nodes, lb, ub, cuts_added)

    if report_status == OPTIMAL:
        lb = ub if ub < np.inf else lb
        if ub == np.inf:
            report_status = INFEASIBLE
            lb = np.inf
    else:
        open_bounds = [entry[0] for entry in heap]
        if open_bounds:
            lb = min(open_bounds)
        if ub < np.inf:
            lb = min(lb, ub)
    emit(nodes, lb, ub, cuts_added)
    return SolveReport(
        report_status,
        float(ub),
        float(lb),
        nodes,
        cuts_added,
        float(root_value),
        time.perf_counter() - t0,
        incumbent,
    )


def root_gap(model: MipModel, cuts=None, incumbent=None, **solve_kwargs) -> float:
    """Final optimality gap at the root node, in percent.

    incumbent is an upper-bound objective value; when omitted a full solve
    supplies it.  Raises NoIncumbent when no finite incumbent is available.
    """
    if incumbent is None:
        report = solve_mip(model, cuts=cuts, **solve_kwargs)
        if report.upper_bound == np.inf:
            raise NoIncumbent("no finite incumbent found for the root gap")
        incumbent = report.upper_bound
    if not np.isfinite(incumbent):
        raise NoIncumbent("incumbent must be finite")
    ws = _Workspace(model)
    status, root_obj, x = ws.solve()
    if status != OPTIMAL:
        raise NoIncumbent(f"root relaxation is {status}")
    if cuts is not None:
        for _ in range(100):
            primal = {name: float(v) for name, v in zip(ws.names, x)}
            violated = cuts.separate(primal)
            if not violated:
                break
            for row in violated:
                ws.add_linear_row(row)
            status, root_obj, x = ws.solve()
            if status != OPTIMAL:
                break
    return gap_percent(incumbent, root_obj)
