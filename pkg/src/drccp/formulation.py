"""Solver-agnostic MIP builders for the three chance-constraint formulations.

Row families carry the labels bigM1, bigM2, bigM3, knapsack, conic, quantile
and saa_bigM; every builder emits rows tagged with the family name plus the
(scenario, row) key so tests and exports can account for each family exactly.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Instance, L2, dual_of
from .errors import InvalidQuantile, UnboundedDomain

CONTINUOUS = "continuous"
BINARY = "binary"

GE = ">="
LE = "<="
EQ = "="


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = np.inf


@dataclass(frozen=True)
class LinearRow:
    """coeffs . vars  (sense)  rhs, tagged with its constraint family."""

    coeffs: dict
    sense: str
    rhs: float
    label: str
    key: tuple = ()


@dataclass(frozen=True)
class ConeRow:
    """out . vars >= scale * ||inputs||_dual with affine inputs.

    Each input is an (coeffs, const) affine expression; dual names the norm
    applied to the stacked input values.  Linear duals are expanded into
    LinearRow objects at build time, so a ConeRow survives only for the
    self-dual l2 case and is refined by supporting hyperplanes in the solver.
    """

    out: dict
    scale: float
    inputs: tuple
    dual: str
    label: str = "conic"


@dataclass(frozen=True)
class MipModel:
    variables: tuple
    linear_rows: tuple
    cone_rows: tuple
    objective: dict
    name: str = "model"

    def __post_init__(self):
        declared = {v.name for v in self.variables}
        for row in self.linear_rows:
            unknown = set(row.coeffs) - declared
            if unknown:
                raise ValueError(f"row {row.label}{row.key} references {unknown}")
        for cone in self.cone_rows:
            refs = set(cone.out)
            for coeffs, _ in cone.inputs:
                refs |= set(coeffs)
            if refs - declared:
                raise ValueError(f"cone row references {refs - declared}")
        if set(self.objective) - declared:
            raise ValueError("objective references undeclared variables")

    @property
    def binaries(self):
        return tuple(v.name for v in self.variables if v.kind == BINARY)

    def rows_with_label(self, label):
        return [r for r in self.linear_rows if r.label == label]

    def var_index(self):
        return {v.name: j for j, v in enumerate(self.variables)}


@dataclass(frozen=True)
class BigMVector:
    """Per-scenario big-M constants and where they came from."""

    values: np.ndarray
    provenance: str = "UserSupplied"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise ValueError("big-M values must be finite and positive")


def scenario_row_terms(inst: Instance, i: int):
    """Coefficient matrix (P, L) and constant vector (P,) of scenario i's rows."""
    xi = inst.scenarios[i]
    coefs = inst.safety.row_coefficient(xi)
    consts = inst.safety.row_constant(xi)
    return coefs, consts


def _base_variables(inst: Instance):
    vars = []
    for j, (lo, hi) in enumerate(zip(inst.domain.lb, inst.domain.ub)):
        vars.append(Variable(f"x_{j}", CONTINUOUS, float(lo), float(hi)))
    vars.append(Variable("t", CONTINUOUS, 0.0, np.inf))
    for i in range(inst.N):
        vars.append(Variable(f"r_{i}", CONTINUOUS, 0.0, np.inf))
    for i in range(inst.N):
        vars.append(Variable(f"z_{i}", BINARY, 0.0, 1.0))
    return vars


def _direction_inputs(inst: Instance):
    """Affine expressions of the direction vector b - A x, one per coordinate."""
    A = inst.safety.A
    b = inst.safety.b
    inputs = []
    for kk in range(inst.safety.K):
        coeffs = {f"x_{j}": -float(A[kk, j]) for j in range(inst.L) if A[kk, j] != 0.0}
        inputs.append((coeffs, float(b[kk])))
    return tuple(inputs)


def _conic_rows(inst: Instance, vars):
    """Expand eps*t >= theta*||b - A x||_* + (1/N) sum r into IR rows."""
    out = {"t": float(inst.epsilon)}
    for i in range(inst.N):
        out[f"r_{i}"] = -1.0 / inst.N
    dual = dual_of(inst.norm)
    inputs = _direction_inputs(inst)
    theta = float(inst.theta)
    linear, cones = [], []
    if theta == 0.0 or all(not c and const == 0.0 for c, const in inputs):
        linear.append(LinearRow(dict(out), GE, 0.0, "conic"))
        return linear, cones
    if dual == "linf":
        # out >= theta * max_k |v_k|
        for kk, (coeffs, const) in enumerate(inputs):
            for sign in (+1.0, -1.0):
                row = dict(out)
                for name, c in coeffs.items():
                    row[name] = row.get(name, 0.0) - sign * theta * c
                linear.append(LinearRow(row, GE, sign * theta * const, "conic", (kk,)))
    elif dual == "l1":
        # out >= theta * sum_k w_k with w_k >= |v_k|
        for kk, (coeffs, const) in enumerate(inputs):
            vars.append(Variable(f"w_{kk}", CONTINUOUS, 0.0, np.inf))
            for sign in (+1.0, -1.0):
                row = {f"w_{kk}": 1.0}
                for name, c in coeffs.items():
                    row[name] = row.get(name, 0.0) - sign * c
                linear.append(LinearRow(row, GE, sign * const, "conic", (kk,)))
        row = dict(out)
        for kk in range(len(inputs)):
            row[f"w_{kk}"] = row.get(f"w_{kk}", 0.0) - theta
        linear.append(LinearRow(row, GE, 0.0, "conic"))
    else:
        cones.append(ConeRow(out=dict(out), scale=theta, inputs=inputs, dual=L2))
    return linear, cones


def _coef_row(coefs_p, base=None):
    row = dict(base) if base else {}
    for j, c in enumerate(coefs_p):
        if c != 0.0:
            row[f"x_{j}"] = row.get(f"x_{j}", 0.0) + float(c)
    return row


def build_basic(inst: Instance, M: BigMVector) -> MipModel:
    """Big-M reformulation with indicator-relaxed distance rows.

    Requires M to satisfy the pointwise bound max_p |s_p(x, xi^i)| <= M^i at
    some optimal x for validity.
    """
    vars = _base_variables(inst)
    rows, cones = _conic_rows(inst, vars)
    Mv = M.values
    if Mv.shape != (inst.N,):
        raise ValueError("big-M vector length must equal N")
    for i in range(inst.N):
        rows.append(
            LinearRow(
                {"t": -1.0, f"r_{i}": 1.0, f"z_{i}": -float(Mv[i])},
                GE,
                -float(Mv[i]),
                "bigM1",
                (i,),
            )
        )
    for i in range(inst.N):
        coefs, consts = scenario_row_terms(inst, i)
        for p in range(inst.P):
            row = _coef_row(coefs[p], {"t": -1.0, f"r_{i}": 1.0, f"z_{i}": float(Mv[i])})
            rows.append(LinearRow(row, GE, -float(consts[p]), "bigM2", (i, p)))
    objective = {f"x_{j}": float(c) for j, c in enumerate(inst.cost)}
    return MipModel(tuple(vars), tuple(rows), tuple(cones), objective, "basic")


def _knapsack_rows(inst: Instance, M: BigMVector):
    rows = [
        LinearRow({f"z_{i}": 1.0 for i in range(inst.N)}, LE, float(inst.k), "knapsack")
    ]
    for i in range(inst.N):
        coefs, consts = scenario_row_terms(inst, i)
        for p in range(inst.P):
            row = _coef_row(coefs[p], {f"z_{i}": float(M.values[i])})
            rows.append(LinearRow(row, GE, -float(consts[p]), "bigM3", (i, p)))
    return rows


def build_knapsack(inst: Instance, M: BigMVector) -> MipModel:
    """Basic model plus the cardinality row and per-scenario feasibility rows."""
    base = build_basic(inst, M)
    rows = list(base.linear_rows) + _knapsack_rows(inst, M)
    return MipModel(base.variables, tuple(rows), base.cone_rows, base.objective, "knapsack")


def build_improved(inst: Instance, M: BigMVector, qt) -> MipModel:
    """Knapsack model with quantile rows and reduced indicator coefficients.

    The coefficient of z_i in row (i, p) shrinks from M^i to
    -(b' xi_p^i + d_p) - q_p^i; a -inf entry in the table degrades that row
    back to M^i and omits the quantile row.  Raises InvalidQuantile when a
    finite q would make the coefficient negative (a bound that overshoots the
    true quantile); callers holding exact tables can pre-floor them with
    QuantileTable.coefficient_safe().
    """
    vars = _base_variables(inst)
    rows, cones = _conic_rows(inst, vars)
    Mv = M.values
    q = qt.q
    if q.shape != (inst.N, inst.P):
        raise ValueError("quantile table shape must be (N, P)")
    for i in range(inst.N):
        rows.append(
            LinearRow(
                {"t": -1.0, f"r_{i}": 1.0, f"z_{i}": -float(Mv[i])},
                GE,
                -float(Mv[i]),
                "bigM1",
                (i,),
            )
        )
    loose = []
    for i in range(inst.N):
        coefs, consts = scenario_row_terms(inst, i)
        for p in range(inst.P):
            q_ip = q[i, p]
            if q_ip == -np.inf:
                coef_z = float(Mv[i])
            else:
                coef_z = -float(consts[p]) - float(q_ip)
                if coef_z < -1e-9:
                    raise InvalidQuantile(
                        f"coefficient {coef_z:.6g} < 0 at (i={i}, p={p}); "
                        "quantile bound exceeds -(b'xi + d)"
                    )
                coef_z = max(coef_z, 0.0)
                if coef_z > Mv[i] + 1e-9:
                    loose.append((i, p))
                rows.append(
                    LinearRow(_coef_row(coefs[p]), GE, float(q_ip), "quantile", (i, p))
                )
            row = _coef_row(coefs[p], {"t": -1.0, f"r_{i}": 1.0, f"z_{i}": coef_z})
            rows.append(LinearRow(row, GE, -float(consts[p]), "bigM2", (i, p)))
    if loose:
        warnings.warn(
            f"reduced coefficient exceeds M^i at {len(loose)} rows "
            f"(first {loose[0]}); M may be too small for the dominance claim",
            stacklevel=2,
        )
    rows.extend(_knapsack_rows(inst, M))
    objective = {f"x_{j}": float(c) for j, c in enumerate(inst.cost)}
    return MipModel(tuple(vars), tuple(rows), tuple(cones), objective, "improved")


def build_saa(inst: Instance, M: BigMVector) -> MipModel:
    """Nominal chance-constraint model: knapsack plus big-M feasibility rows.

    No ambiguity machinery (t, r, conic); coincides with the distributionally
    robust optimum at theta = 0.
    """
    vars = []
    for j, (lo, hi) in enumerate(zip(inst.domain.lb, inst.domain.ub)):
        vars.append(Variable(f"x_{j}", CONTINUOUS, float(lo), float(hi)))
    for i in range(inst.N):
        vars.append(Variable(f"z_{i}", BINARY, 0.0, 1.0))
    rows = [
        LinearRow({f"z_{i}": 1.0 for i in range(inst.N)}, LE, float(inst.k), "knapsack")
    ]
    for i in range(inst.N):
        coefs, consts = scenario_row_terms(inst, i)
        for p in range(inst.P):
            row = _coef_row(coefs[p], {f"z_{i}": float(M.values[i])})
            rows.append(LinearRow(row, GE, -float(consts[p]), "saa_bigM", (i, p)))
    objective = {f"x_{j}": float(c) for j, c in enumerate(inst.cost)}
    return MipModel(tuple(vars), tuple(rows), (), objective, "saa")


def compute_bigM_domain(inst: Instance) -> BigMVector:
    """Big-M from the domain box: max over the box of |s_p(x, xi^i)|, max over p.

    The maximum of an affine function over a box is separable, so no LP solve
    is needed.  Raises UnboundedDomain when any variable bound is infinite.
    """
    if not inst.domain.is_bounded:
        raise UnboundedDomain("domain box has infinite bounds; use an application rule")
    lb, ub = inst.domain.lb, inst.domain.ub
    values = np.empty(inst.N)
    for i in range(inst.N):
        coefs, consts = scenario_row_terms(inst, i)
        hi = np.where(coefs > 0, coefs * ub, coefs * lb).sum(axis=1) + consts
        lo = np.where(coefs > 0, coefs * lb, coefs * ub).sum(axis=1) + consts
        values[i] = max(np.abs(hi).max(), np.abs(lo).max())
    # a zero row would make the indicator unusable; keep M strictly positive
    return BigMVector(np.maximum(values, 1e-9), "DomainBound")
