"""Ground-truth verification by exhaustive enumeration over the indicators.

The enumeration assembles its fixed-indicator LPs directly from instance
data, independently of the formulation builders, so agreement between the
two routes certifies both.  Mode "knapsack" enumerates the distance-based
description of the robust region itself (no big-M constants anywhere);
modes "basic", "improved" and "saa" enumerate the literal rows of those
formulations.
"""

from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .core import CLOSED, DEGENERACY_TOL, Instance, dual_of
from .errors import DegenerateDirection, NotDegenerate, NumericalFailure, TooManyScenarios

IN_DR = "in_dr"
BOUNDARY = "boundary"
CLOSED_EXTRANEOUS = "closed_extraneous"
OPEN_EXTRANEOUS = "open_extraneous"

MAX_ORACLE_N = 16

_OPTS = {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}


def is_open_extraneous(label: str) -> bool:
    """Whether a classification lies in the open-set extraneous region."""
    return label in (CLOSED_EXTRANEOUS, BOUNDARY, OPEN_EXTRANEOUS)


def classify_extraneous(x, inst: Instance, eq_tol: float = 1e-9) -> str:
    """Classify a decision with degenerate direction b = A x.

    Returns CLOSED_EXTRANEOUS when some row offset d_p - a_p'x is strictly
    negative (the point survives the plain big-M rows but is robust-infeasible
    for either closure), BOUNDARY when some offset vanishes but none is
    negative (kept by the closed safety set, extraneous only for the open
    one), and IN_DR when every offset is positive.
    """
    tag = inst.dual_tag
    u = inst.safety.direction(x)
    if tag.dual_value(u) > DEGENERACY_TOL:
        raise NotDegenerate("b != A x; use membership_drccp instead")
    offsets = inst.safety.d - inst.safety.a @ np.asarray(x, dtype=float)
    if np.any(offsets < -eq_tol):
        return CLOSED_EXTRANEOUS
    if np.any(offsets <= eq_tol):
        return BOUNDARY
    return IN_DR


def membership_drccp(x, inst: Instance, tol: float = 1e-9) -> bool:
    """Exact membership of x in the robust region (closed safety set).

    Uses the distance characterization: feasible iff there are t >= 0 and
    r >= 0 with dist(xi^i, S(x)) >= t - r^i and eps*t >= theta + mean(r).
    Solved as a single LP in (t, r).  The characterization needs theta > 0;
    at theta = 0 the ambiguity set is the empirical distribution and the
    test reduces to the scenario violation count.  Degenerate directions are
    routed to classify_extraneous.
    """
    from .core import eval_distance, saa_violation_count

    if inst.theta == 0.0:
        return saa_violation_count(x, inst) <= inst.k
    try:
        dists = [
            eval_distance(x, inst.scenarios[i], inst.safety, inst.dual_tag)
            for i in range(inst.N)
        ]
    except DegenerateDirection:
        return classify_extraneous(x, inst) in (IN_DR, BOUNDARY)
    N = inst.N
    # maximize eps*t - mean(r); columns [t, r_1..r_N]
    c = np.concatenate([[-inst.epsilon], np.full(N, 1.0 / N)])
    A_ub = np.hstack([np.ones((N, 1)), -np.eye(N)])
    res = linprog(
        c=c,
        A_ub=A_ub,
        b_ub=np.asarray(dists, dtype=float),
        bounds=[(0, None)] * (N + 1),
        method="highs",
        options=_OPTS,
    )
    if res.status != 0:
        raise NumericalFailure(f"membership LP failed: {res.message}")
    return -res.fun >= inst.theta - tol


class _FixedIndicatorLp:
    """Shared assembly for the per-indicator-pattern LPs of one instance."""

    def __init__(self, inst, mode, M=None, qt=None):
        self.inst = inst
        self.mode = mode
        self.M = None if M is None else np.asarray(M.values, dtype=float)
        self.q = None if qt is None else np.asarray(qt.q, dtype=float)
        N, P, L = inst.N, inst.P, inst.L
        self.coefs = np.empty((N, P, L))
        self.consts = np.empty((N, P))
        for i in range(N):
            self.coefs[i] = inst.safety.row_coefficient(inst.scenarios[i])
            self.consts[i] = inst.safety.row_constant(inst.scenarios[i])
        self.with_ambiguity = mode != "saa"
        self.ncols = L + (1 + N if self.with_ambiguity else 0)
        self.cost = np.zeros(self.ncols)
        self.cost[:L] = inst.cost
        bounds = inst.domain.bounds_list()
        if self.with_ambiguity:
            bounds = bounds + [(0.0, None)] * (1 + N)
        self.bounds = bounds
        self.t_col = L
        self.r_col = L + 1
        self.conic_rows, self.conic_rhs, self.l2_dir = self._conic()
        self.oa_pool = []  # shared supporting hyperplanes for the l2 cone

    def _direction_affine(self):
        # u(x) = b - A x as (K, L) coefficient block and (K,) constants
        A = self.inst.safety.A
        return -A, self.inst.safety.b.copy()

    def _conic(self):
        """Rows (>= 0 form) encoding eps*t - mean(r) - theta*||u(x)||_* >= 0."""
        if not self.with_ambiguity:
            return np.empty((0, self.ncols)), np.empty(0), None
        inst = self.inst
        N, L, K = inst.N, inst.L, inst.safety.K
        theta = inst.theta
        out = np.zeros(self.ncols)
        out[self.t_col] = inst.epsilon
        out[self.r_col : self.r_col + N] = -1.0 / N
        Umat, uconst = self._direction_affine()
        rows, rhs = [], []
        dual = dual_of(inst.norm)
        if theta == 0.0:
            rows.append(out)
            rhs.append(0.0)
            return np.array(rows), np.array(rhs), None
        if dual == "linf":
            for kk in range(K):
                for sign in (1.0, -1.0):
                    row = out.copy()
                    row[:L] -= sign * theta * Umat[kk]
                    rows.append(row)
                    rhs.append(sign * theta * uconst[kk])
        elif dual == "l1":
            # widen with w columns lazily: add K aux columns once
            self.ncols += K
            self.cost = np.concatenate([self.cost, np.zeros(K)])
            self.bounds = self.bounds + [(0.0, None)] * K
            out = np.concatenate([out, np.zeros(K)])
            w0 = self.ncols - K
            for kk in range(K):
                for sign in (1.0, -1.0):
                    row = np.zeros(self.ncols)
                    row[w0 + kk] = 1.0
                    row[:L] -= sign * Umat[kk]
                    rows.append(row)
                    rhs.append(sign * uconst[kk])
            top = out.copy()
            top[w0:] = -theta
            rows.append(top)
            rhs.append(0.0)
        else:  # l2: base row + coordinate supports, refined via the OA pool
            rows.append(out)
            rhs.append(0.0)
            for kk in range(K):
                for sign in (1.0, -1.0):
                    row = out.copy()
                    row[:L] -= sign * theta * Umat[kk]
                    rows.append(row)
                    rhs.append(sign * theta * uconst[kk])
            return np.array(rows), np.array(rhs), (out, theta, Umat, uconst)
        return (
            np.array(rows) if rows else np.empty((0, self.ncols)),
            np.array(rhs),
            None,
        )

    def rows_for(self, pattern):
        """Stack >=-form rows for one 0/1 indicator pattern."""
        inst = self.inst
        L, P = inst.L, inst.P
        rows, rhs = [self.conic_rows], [self.conic_rhs]
        mode, M, q = self.mode, self.M, self.q
        for i, zi in enumerate(pattern):
            if mode == "saa":
                if not zi:
                    blk = np.zeros((P, self.ncols))
                    blk[:, :L] = self.coefs[i]
                    rows.append(blk)
                    rhs.append(-self.consts[i])
                continue
            if zi:
                row = np.zeros(self.ncols)
                row[self.r_col + i] = 1.0
                row[self.t_col] = -1.0
                rows.append(row[None, :])
                rhs.append(np.zeros(1))
                if mode == "basic":
                    blk = np.zeros((P, self.ncols))
                    blk[:, :L] = self.coefs[i]
                    blk[:, self.t_col] = -1.0
                    blk[:, self.r_col + i] = 1.0
                    rows.append(blk)
                    rhs.append(-self.consts[i] - M[i])
                elif mode == "improved":
                    coef_z = np.where(
                        np.isneginf(q[i]), M[i], -self.consts[i] - q[i]
                    )
                    blk = np.zeros((P, self.ncols))
                    blk[:, :L] = self.coefs[i]
                    blk[:, self.t_col] = -1.0
                    blk[:, self.r_col + i] = 1.0
                    rows.append(blk)
                    rhs.append(-self.consts[i] - coef_z)
                    blk3 = np.zeros((P, self.ncols))
                    blk3[:, :L] = self.coefs[i]
                    rows.append(blk3)
                    rhs.append(-self.consts[i] - M[i])
            else:
                blk = np.zeros((P, self.ncols))
                blk[:, :L] = self.coefs[i]
                blk[:, self.t_col] = -1.0
                blk[:, self.r_col + i] = 1.0
                rows.append(blk)
                rhs.append(-self.consts[i])
                if mode in ("basic", "improved"):
                    row = np.zeros(self.ncols)
                    row[self.t_col] = -1.0
                    row[self.r_col + i] = 1.0
                    rows.append(row[None, :])
                    rhs.append(np.array([-M[i]]))
                if mode == "improved":
                    blk3 = np.zeros((P, self.ncols))
                    blk3[:, :L] = self.coefs[i]
                    rows.append(blk3)
                    rhs.append(-self.consts[i])
            if mode == "improved":
                finite = np.isfinite(q[i])
                if finite.any():
                    blk = np.zeros((finite.sum(), self.ncols))
                    blk[:, :L] = self.coefs[i][finite]
                    rows.append(blk)
                    rhs.append(q[i][finite])
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        return A, b

    def solve_pattern(self, pattern, extra_row=None, objective=None):
        A, b = self.rows_for(pattern)
        cost = self.cost if objective is None else objective
        for _ in range(200):
            A_full, b_full = A, b
            if self.oa_pool:
                A_full = np.vstack([A] + [r for r, _ in self.oa_pool])
                b_full = np.concatenate([b, np.array([v for _, v in self.oa_pool])])
            if extra_row is not None:
                A_full = np.vstack([A_full, extra_row[0][None, :]])
                b_full = np.concatenate([b_full, [extra_row[1]]])
            res = linprog(
                c=cost,
                A_ub=-A_full,
                b_ub=-b_full,
                bounds=self.bounds,
                method="highs",
                options=_OPTS,
            )
            if res.status == 2:
                return np.inf, None
            if res.status == 3:
                return -np.inf, None
            if res.status != 0:
                raise NumericalFailure(f"oracle LP failed: {res.message}")
            if self.l2_dir is None:
                return float(res.fun), res.x
            out, theta, Umat, uconst = self.l2_dir
            x = res.x
            v = Umat @ x[: self.inst.L] + uconst
            norm = float(np.sqrt(v @ v))
            if float(out @ x) >= theta * norm - 1e-9 or norm == 0.0:
                return float(res.fun), res.x
            g = v / norm
            row = out.copy()
            row[: self.inst.L] -= theta * (g @ Umat)
            self.oa_pool.append((row[None, :], theta * float(g @ uconst)))
        raise NumericalFailure("oracle cone refinement did not converge")


def _patterns(N, k, mode):
    if mode == "basic":
        for bits in range(1 << N):
            yield tuple((bits >> i) & 1 for i in range(N))
    else:
        for count in range(k + 1):
            for ones in combinations(range(N), count):
                pattern = [0] * N
                for i in ones:
                    pattern[i] = 1
                yield tuple(pattern)


def enumerate_optimum(
    inst: Instance,
    formulation: str = "knapsack",
    M=None,
    qt=None,
    minimal_footprint: bool = False,
):
    """Best objective over every indicator pattern, each solved as an LP.

    formulation "knapsack" is the reference: it enumerates the distance
    description of the robust region restricted by the cardinality bound and
    involves no big-M constants.  "basic" sweeps all 2^N patterns of the
    plain big-M rows; "improved" enumerates that formulation's literal rows
    (requires M and qt); "saa" enumerates the nominal model (requires M...
    only for interface symmetry; its rows are M-free once indicators are
    fixed).

    minimal_footprint re-solves the winning pattern minimizing sum(x) at the
    optimal objective value, returning the least-activity optimal solution.
    """
    if inst.N > MAX_ORACLE_N:
        raise TooManyScenarios(f"N = {inst.N} exceeds the oracle guard {MAX_ORACLE_N}")
    if formulation not in ("basic", "knapsack", "improved", "saa"):
        raise ValueError(f"unknown formulation {formulation!r}")
    if formulation == "basic" and M is None:
        raise ValueError("basic enumeration needs big-M values")
    if formulation == "improved" and (M is None or qt is None):
        raise ValueError("improved enumeration needs M and a quantile table")
    lp = _FixedIndicatorLp(inst, formulation, M=M, qt=qt)
    best = (np.inf, None, None)
    for pattern in _patterns(inst.N, inst.k, formulation):
        val, x = lp.solve_pattern(pattern)
        if val < best[0] - 1e-12:
            best = (val, x, pattern)
    obj, x, pattern = best
    if x is None:
        return np.inf, None
    if minimal_footprint:
        cap = np.zeros(lp.ncols)
        cap[: inst.L] = -np.asarray(inst.cost, dtype=float)
        cap_rhs = -(obj + 1e-9 * max(1.0, abs(obj)))
        footprint = np.zeros(lp.ncols)
        footprint[: inst.L] = 1.0
        val2, x2 = lp.solve_pattern(pattern, extra_row=(cap, cap_rhs), objective=footprint)
        if x2 is not None:
            x = x2
    return obj, {
        "x": np.asarray(x[: inst.L]),
        "z": np.asarray(pattern),
        "objective": obj,
    }
