"""Shared test utilities: random instances and an independent LP oracle.

The vertex oracle enumerates basic points of small LPs directly from the
constraint data, so it shares no code with the solver module it checks.
"""

from itertools import combinations

import numpy as np

from drccp.core import CLOSED, Box, Instance, SafetySpec


def rand_instance(
    seed: int,
    N: int = 8,
    P: int = 1,
    K: int = 2,
    L: int = 2,
    norm: str = "l1",
    epsilon: float = 0.2,
    theta: float = 0.01,
    closedness: str = CLOSED,
) -> Instance:
    """Bounded-box instance with mostly-feasible safety rows.

    Offsets d are kept positive so x = 0 tends to be robust-feasible, and
    some costs are negative so optima push against the safety rows.
    """
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, size=(K, L))
    a = rng.uniform(-1.0, 1.0, size=(P, L))
    b = rng.uniform(-0.5, 0.5, size=K)
    d = rng.uniform(1.0, 2.0, size=P)
    safety = SafetySpec(A=A, a=a, b=b, d=d, closedness=closedness)
    scenarios = rng.uniform(-1.0, 1.0, size=(N, P, K))
    cost = rng.uniform(-1.0, 1.0, size=L)
    ub = rng.uniform(1.0, 3.0, size=L)
    return Instance(
        scenarios=scenarios,
        epsilon=epsilon,
        theta=theta,
        norm=norm,
        domain=Box(np.zeros(L), ub),
        cost=cost,
        safety=safety,
    )


def vertex_lp(c, A_ub, b_ub, bounds, tol=1e-9):
    """Minimize c'x s.t. A_ub x <= b_ub and box bounds, by vertex enumeration.

    Builds the pool of constraint hyperplanes (rows plus active bounds) and
    tests every n-subset intersection for feasibility.  Only for bounded
    feasible regions with n <= 4.  Returns (value, x) or (inf, None).
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = []
    rhs = []
    if A_ub is not None and len(A_ub):
        for row, b in zip(np.asarray(A_ub, dtype=float), np.asarray(b_ub, dtype=float)):
            rows.append(row)
            rhs.append(b)
    for j, (lo, hi) in enumerate(bounds):
        if lo is not None and np.isfinite(lo):
            e = np.zeros(n)
            e[j] = -1.0
            rows.append(e)
            rhs.append(-lo)
        if hi is not None and np.isfinite(hi):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            rhs.append(hi)
    rows = np.array(rows)
    rhs = np.array(rhs)
    best = (np.inf, None)
    for subset in combinations(range(len(rows)), n):
        Asub = rows[list(subset)]
        bsub = rhs[list(subset)]
        if abs(np.linalg.det(Asub)) < 1e-12:
            continue
        x = np.linalg.solve(Asub, bsub)
        if np.all(rows @ x <= rhs + tol):
            val = float(c @ x)
            if val < best[0]:
                best = (val, x)
    return best


def mip_agrees(report, oracle_value, rel=1e-6) -> bool:
    """Same optimum, treating joint infeasibility as agreement."""
    if not np.isfinite(oracle_value):
        return report.status == "infeasible" or not np.isfinite(report.upper_bound)
    if report.status != "optimal":
        return False
    return abs(report.upper_bound - oracle_value) <= rel * max(1.0, abs(oracle_value))
