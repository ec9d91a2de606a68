"""Single-scenario subproblems, quantile bounds, and coefficient tables.

For a probe direction mu drawn from scenario (i, p), the value of scenario j
is the LP minimum of mu'x over a relaxed domain intersected with scenario j's
safety rows; the (k+1)-th largest of those N values is the strengthening
quantile.  Covering/packing rows and the resource-planning structure admit
closed-form lower bounds that skip the N^2 LP solves.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog

from .core import Box, Instance, floor_eps_n
from .errors import (
    AllInfeasible,
    NumericalFailure,
    SignViolation,
    SupportMismatch,
)
from .formulation import BigMVector

INDIVIDUAL = "individual"
JOINT = "joint"

EXACT_JOINT = "exact-joint"
EXACT_INDIVIDUAL = "exact-individual"
COVERING_CLOSED_FORM = "covering"
PACKING_CLOSED_FORM = "packing"
RESOURCE_RULE = "resource"
USER_BOUND = "user"

_OPTS = {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}


@dataclass(frozen=True)
class QuantileTable:
    """Per-(i, p) strengthening data.

    h_values : (N, P, N) scenario values h[i, p, j] for probe (i, p), or None
               in user-bound mode; entries may be +-inf.
    q        : (N, P) quantiles (exact modes) or valid lower bounds on them.
    mode     : how the table was produced.
    k        : floor(epsilon * N) the table was built for.
    infeasible_scenarios : indices whose own safety rows admit no point; the
               paper's rule is to force their indicators to one.
    """

    h_values: object
    q: np.ndarray
    mode: str
    k: int
    infeasible_scenarios: frozenset = frozenset()

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        if self.h_values is not None:
            h = np.array(self.h_values, dtype=float)
            h.setflags(write=False)
            object.__setattr__(self, "h_values", h)

    def coefficient_safe(self, inst: Instance) -> "QuantileTable":
        """Floor q at -(b'xi_p^i + d_p) so indicator coefficients stay >= 0.

        Any lower bound on the quantile keeps the strengthened formulation
        exact, so this only weakens rows whose exact quantile exceeded the
        coefficient-neutral level.
        """
        caps = np.empty_like(self.q)
        for i in range(inst.N):
            caps[i] = -inst.safety.row_constant(inst.scenarios[i])
        return replace(self, q=np.minimum(self.q, caps))


@dataclass(frozen=True)
class QuantileConfig:
    mode: str = EXACT_INDIVIDUAL
    relaxation: str = INDIVIDUAL  # scenario rows used inside exact subproblems
    domain_relax: Box = None  # defaults to the instance box (bounds only)
    user_q: object = None


def kth_largest(values, k: int) -> float:
    """(k+1)-th largest element; +-inf participate in the order."""
    vals = sorted((float(v) for v in values), reverse=True)
    if all(v == np.inf for v in vals):
        raise AllInfeasible("every scenario subproblem is infeasible")
    return vals[k]


def subproblem_value(
    mu,
    j: int,
    inst: Instance,
    relaxation: str = INDIVIDUAL,
    domain_relax: Box = None,
    p: int = None,
) -> float:
    """LP minimum of mu'x over the relaxed domain and scenario j's rows.

    relaxation INDIVIDUAL keeps only row p of scenario j; JOINT keeps all P
    rows (a stronger, costlier value).  Returns -inf when unbounded and +inf
    when infeasible; both are legitimate, in-band results.
    """
    mu = np.asarray(mu, dtype=float)
    box = domain_relax if domain_relax is not None else inst.domain
    coefs = inst.safety.row_coefficient(inst.scenarios[j])
    consts = inst.safety.row_constant(inst.scenarios[j])
    if relaxation == INDIVIDUAL:
        if p is None:
            raise ValueError("individual relaxation needs the row index p")
        rows = coefs[p : p + 1]
        rhs = -consts[p : p + 1]
    elif relaxation == JOINT:
        rows = coefs
        rhs = -consts
    else:
        raise ValueError(f"unknown relaxation {relaxation!r}")
    res = linprog(
        c=mu,
        A_ub=-rows,
        b_ub=-rhs,
        bounds=box.bounds_list(),
        method="highs",
        options=_OPTS,
    )
    if res.status == 2:
        return np.inf
    if res.status == 3:
        return -np.inf
    if res.status != 0:
        raise NumericalFailure(f"subproblem LP failed: {res.message}")
    return float(res.fun)


def quantile(
    mu,
    i: int,
    p: int,
    inst: Instance,
    cfg: QuantileConfig = QuantileConfig(),
) -> float:
    """(k+1)-th largest scenario value for the probe direction of (i, p)."""
    values = [
        subproblem_value(mu, j, inst, cfg.relaxation, cfg.domain_relax, p=p)
        for j in range(inst.N)
    ]
    return kth_largest(values, inst.k)


def _row_sign_type(coefs_row, rhs) -> str:
    nonneg = np.all(coefs_row >= 0.0) and rhs >= 0.0
    nonpos = np.all(coefs_row <= 0.0) and rhs <= 0.0
    if nonneg:
        return "covering"
    if nonpos:
        return "packing"
    raise SignViolation("row is neither covering nor packing type")


def covering_packing_bound(i: int, p: int, j: int, inst: Instance) -> float:
    """Closed-form lower bound on scenario j's value for probe (i, p).

    Requires covering or packing sign structure, a common support across the
    two coefficient vectors, and a nonnegative domain.  The bound is
    min over supported coordinates of c_i[l] * rhs_j / c_j[l], the vertex
    value of the single-row LP over the nonnegative orthant.
    """
    if np.any(inst.domain.lb < 0.0):
        raise SignViolation("closed form needs a domain inside the nonnegative orthant")
    ci = inst.safety.row_coefficient(inst.scenarios[i])[p]
    cj = inst.safety.row_coefficient(inst.scenarios[j])[p]
    rhs_j = -float(inst.safety.row_constant(inst.scenarios[j])[p])
    supp_i = ci != 0.0
    if not np.array_equal(supp_i, cj != 0.0):
        raise SupportMismatch(f"rows ({i},{p}) and ({j},{p}) differ in support")
    kind_i = _row_sign_type(ci, -float(inst.safety.row_constant(inst.scenarios[i])[p]))
    kind_j = _row_sign_type(cj, rhs_j)
    if kind_i != kind_j:
        raise SignViolation("mixed covering/packing pair")
    if not supp_i.any():
        return 0.0 if rhs_j == 0.0 else np.inf
    ratios = ci[supp_i] * rhs_j / cj[supp_i]
    return float(ratios.min())


def resource_U_bounds(inst: Instance) -> np.ndarray:
    """Per-(resource, group) allocation caps max_i lambda_p^i / mu_dp^i."""
    st = _resource_structure(inst)
    D, P = st.D, st.P
    U = np.zeros((D, P))
    for d in range(D):
        for p in range(P):
            mask = st.mu[:, d, p] > 0.0
            if mask.any():
                U[d, p] = float((st.lam[mask, p] / st.mu[mask, d, p]).max())
    return U


def resource_quantile_bound(
    d: int, i: int, j: int, inst: Instance, U: np.ndarray
) -> float:
    """Lower bound on scenario j's value for assignment-row probe (i, d).

    Splits on the sign of rho_d^i / rho_d^j - 1: the nonnegative branch uses
    the per-group allocation floors L_dp^j, the negative branch the caps U.
    Returns +inf when scenario j is infeasible (demand positive after
    saturating the other resources but its own service rate is zero); the
    caller may then force that scenario's indicator to one.
    """
    st = _resource_structure(inst)
    ratio = st.rho[i, d] / st.rho[j, d] - 1.0
    if ratio < 0.0:
        return float(ratio * U[d].sum())
    total = 0.0
    others = U.sum(axis=0) - U[d]
    for p in range(st.P):
        resid = st.lam[j, p] - others[p]
        if st.mu[j, d, p] > 0.0:
            total += max(0.0, resid) / st.mu[j, d, p]
        elif resid > 0.0:
            return np.inf
    return float(ratio * total)


def resource_bigM(inst: Instance) -> BigMVector:
    """Big-M rule from the allocation caps and the yield spread."""
    st = _resource_structure(inst)
    U = resource_U_bounds(inst)
    rho_max = st.rho.max(axis=0)
    rho_min = st.rho.min(axis=0)
    u_row = U.sum(axis=1)  # sum over groups per resource
    values = np.empty(inst.N)
    for i in range(inst.N):
        demand_side = max(
            max(st.lam[i, p], float(st.mu[i, :, p] @ U[:, p]) - st.lam[i, p])
            for p in range(st.P)
        )
        assign_side = max(
            max(1.0 - st.rho[i, d] / rho_max[d], st.rho[i, d] / rho_min[d] - 1.0)
            * u_row[d]
            for d in range(st.D)
        )
        values[i] = max(demand_side, assign_side)
    return BigMVector(np.maximum(values, 1e-9), "ResourceRule")


def portfolio_bigM(inst: Instance) -> BigMVector:
    """Big-M rule max{w, (xi_max / xi_min - 1) w} shared by every scenario."""
    st = inst.structure
    if st is None or not hasattr(st, "w"):
        raise ValueError("portfolio rule needs a portfolio-structured instance")
    yields = inst.scenarios.reshape(inst.N, -1)
    xi_min = float(yields.min())
    xi_max = float(yields.max())
    if xi_min <= 0.0:
        raise SignViolation(f"nonpositive yield {xi_min} breaks the covering bound")
    M = max(st.w, (xi_max / xi_min - 1.0) * st.w)
    return BigMVector(np.full(inst.N, M), "PortfolioRule")


def _resource_structure(inst: Instance):
    st = inst.structure
    if st is None or not hasattr(st, "rho"):
        raise ValueError("operation needs a resource-structured instance")
    return st


def build_quantile_table(inst: Instance, cfg: QuantileConfig) -> QuantileTable:
    """Populate the (i, p) table in the requested mode.

    Exact modes issue N LP solves per probe direction (N^2 per row family);
    closed-form modes issue none.  q is always the (k+1)-th largest of the
    stored scenario values, so closed-form q are valid lower bounds on the
    exact quantiles.
    """
    N, P, k = inst.N, inst.P, inst.k
    if cfg.mode == USER_BOUND:
        q = np.array(cfg.user_q, dtype=float)
        if q.shape != (N, P):
            raise ValueError("user bounds must have shape (N, P)")
        return QuantileTable(None, q, USER_BOUND, k)
    h = np.empty((N, P, N))
    infeasible = set()
    if cfg.mode in (EXACT_JOINT, EXACT_INDIVIDUAL):
        relax = JOINT if cfg.mode == EXACT_JOINT else INDIVIDUAL
        for i in range(N):
            mus = inst.safety.row_coefficient(inst.scenarios[i])
            for p in range(P):
                for j in range(N):
                    h[i, p, j] = subproblem_value(
                        mus[p], j, inst, relax, cfg.domain_relax, p=p
                    )
    elif cfg.mode in (COVERING_CLOSED_FORM, PACKING_CLOSED_FORM):
        for i in range(N):
            for p in range(P):
                for j in range(N):
                    h[i, p, j] = covering_packing_bound(i, p, j, inst)
    elif cfg.mode == RESOURCE_RULE:
        st = _resource_structure(inst)
        if st.D + st.P != P:
            raise ValueError("resource table expects D assignment rows then P demand rows")
        U = resource_U_bounds(inst)
        for i in range(N):
            for j in range(N):
                for d in range(st.D):
                    h[i, d, j] = resource_quantile_bound(d, i, j, inst, U)
                    if h[i, d, j] == np.inf:
                        infeasible.add(j)
            for p_row in range(st.D, P):
                for j in range(N):
                    h[i, p_row, j] = covering_packing_bound(i, p_row, j, inst)
    else:
        raise ValueError(f"unknown quantile mode {cfg.mode!r}")
    q = np.empty((N, P))
    for i in range(N):
        for p in range(P):
            q[i, p] = kth_largest(h[i, p], k)
    return QuantileTable(h, q, cfg.mode, k, frozenset(infeasible))


def worst_bound_table(inst: Instance, M: BigMVector) -> QuantileTable:
    """User table with q = -M^i - (b'xi + d); reproduces the plain big-M rows."""
    q = np.empty((inst.N, inst.P))
    for i in range(inst.N):
        q[i] = -M.values[i] - inst.safety.row_constant(inst.scenarios[i])
    return QuantileTable(None, q, USER_BOUND, inst.k)


def table_k_check(qt: QuantileTable, inst: Instance) -> bool:
    return qt.k == floor_eps_n(inst.epsilon, inst.N)
