"""Problem data for chance-constrained programs with uncertain row coefficients.

A safety set is a system of P linear rows in the random vector xi,

    (b - A x)' xi_p + d_p - a_p' x  {>, >=}  0,     p = 1..P,

where every row shares the direction vector b - A x.  Scenarios are stored
row-blocked: scenario i is a (P, K) array whose p-th row is the subvector
xi_p^i multiplying the shared direction in row p.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDirection, DimensionMismatch

OPEN = "open"
CLOSED = "closed"

L1 = "l1"
L2 = "l2"
LINF = "linf"

_DUALS = {L1: LINF, L2: L2, LINF: L1}

# below this dual-norm value the direction b - A x counts as degenerate
DEGENERACY_TOL = 1e-10


def dual_of(norm: str) -> str:
    """Dual norm name: l1 <-> linf, l2 self-dual."""
    try:
        return _DUALS[norm]
    except KeyError:
        raise ValueError(f"unknown norm {norm!r}") from None


@dataclass(frozen=True)
class DualNormTag:
    """Pairs the ambiguity norm with the dual norm used on direction vectors."""

    norm: str

    @property
    def dual(self) -> str:
        return dual_of(self.norm)

    def dual_value(self, v) -> float:
        """Evaluate the dual norm of a vector."""
        v = np.asarray(v, dtype=float)
        if self.dual == L1:
            return float(np.abs(v).sum())
        if self.dual == L2:
            return float(np.sqrt((v * v).sum()))
        return float(np.abs(v).max()) if v.size else 0.0


def _frozen_array(obj, name, value, dtype=float):
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)
    return arr


@dataclass(frozen=True)
class SafetySpec:
    """Coefficient data of the safety rows.

    A : (K, L) weights of the decision variables on the uncertain direction,
        so the shared direction vector is b - A @ x.
    a : (P, L) deterministic variable coefficients, one row per safety row.
    b : (K,) deterministic part of the direction.
    d : (P,) row offsets.
    closedness : OPEN for strict rows, CLOSED for weak rows.
    """

    A: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    closedness: str = CLOSED

    def __post_init__(self):
        A = _frozen_array(self, "A", self.A)
        a = _frozen_array(self, "a", self.a)
        b = _frozen_array(self, "b", self.b)
        d = _frozen_array(self, "d", self.d)
        if A.ndim != 2 or a.ndim != 2 or b.ndim != 1 or d.ndim != 1:
            raise DimensionMismatch("A and a must be matrices, b and d vectors")
        K, L = A.shape
        P = a.shape[0]
        if a.shape[1] != L or b.shape[0] != K or d.shape[0] != P or P < 1:
            raise DimensionMismatch(
                f"inconsistent safety shapes: A {A.shape}, a {a.shape}, "
                f"b {b.shape}, d {d.shape}"
            )
        if self.closedness not in (OPEN, CLOSED):
            raise ValueError(f"closedness must be {OPEN!r} or {CLOSED!r}")

    @property
    def P(self) -> int:
        return self.a.shape[0]

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def L(self) -> int:
        return self.A.shape[1]

    def direction(self, x) -> np.ndarray:
        """Shared direction vector b - A x."""
        return self.b - self.A @ np.asarray(x, dtype=float)

    def row_coefficient(self, xi_p) -> np.ndarray:
        """Coefficient vector of x in one row: -(A' xi_p) - a_p, stacked over p.

        Accepts a single (K,) block paired with every p when xi_p is 1-D with
        a matching a-row supplied by the caller; the common use passes the
        full (P, K) scenario and receives a (P, L) coefficient matrix.
        """
        xi = np.asarray(xi_p, dtype=float)
        if xi.ndim == 1:
            return -(self.A.T @ xi)[None, :] - self.a
        return -(xi @ self.A) - self.a

    def row_constant(self, xi_p) -> np.ndarray:
        """Constant part of each row: b' xi_p + d_p."""
        xi = np.asarray(xi_p, dtype=float)
        if xi.ndim == 1:
            return self.b @ xi + self.d
        return xi @ self.b + self.d

    def row_values(self, x, scenario) -> np.ndarray:
        """All P row values s_p(x, xi) for one (P, K) scenario."""
        x = np.asarray(x, dtype=float)
        scenario = np.asarray(scenario, dtype=float)
        u = self.direction(x)
        return scenario @ u + self.d - self.a @ x


@dataclass(frozen=True)
class Box:
    """Variable bounds; entries of ub may be +inf and of lb -inf."""

    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        lb = _frozen_array(self, "lb", self.lb)
        ub = _frozen_array(self, "ub", self.ub)
        if lb.shape != ub.shape or lb.ndim != 1:
            raise DimensionMismatch("bound vectors must be 1-D and equal length")
        if np.any(lb > ub):
            raise ValueError("crossed variable bounds")

    @classmethod
    def nonnegative(cls, n: int) -> "Box":
        return cls(np.zeros(n), np.full(n, np.inf))

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub)))

    def bounds_list(self):
        """Per-variable (lb, ub) pairs with None for infinities."""
        out = []
        for lo, hi in zip(self.lb, self.ub):
            out.append(
                (None if lo == -np.inf else float(lo), None if hi == np.inf else float(hi))
            )
        return out


@dataclass(frozen=True)
class Instance:
    """One sampled problem: scenarios, ambiguity parameters, domain, objective.

    scenarios : (N, P, K) array, scenario i row-blocked by safety row p.
    epsilon   : risk tolerance in (0, 1).
    theta     : ambiguity radius >= 0.
    norm      : ambiguity norm name; directions are measured in its dual.
    domain    : variable box (sign constraints and/or finite bounds).
    cost      : (L,) objective vector, minimized.
    structure : optional application payload (kept opaque here).
    """

    scenarios: np.ndarray
    epsilon: float
    theta: float
    norm: str
    domain: Box
    cost: np.ndarray
    safety: SafetySpec
    structure: object = field(default=None, compare=False)

    def __post_init__(self):
        sc = _frozen_array(self, "scenarios", self.scenarios)
        cost = _frozen_array(self, "cost", self.cost)
        if sc.ndim != 3:
            raise DimensionMismatch("scenarios must be (N, P, K)")
        N, P, K = sc.shape
        if N < 1 or P != self.safety.P or K != self.safety.K:
            raise DimensionMismatch(
                f"scenarios {sc.shape} inconsistent with safety (P={self.safety.P}, "
                f"K={self.safety.K})"
            )
        if cost.shape != (self.safety.L,) or self.domain.lb.shape != (self.safety.L,):
            raise DimensionMismatch("cost/domain length must equal L")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.theta < 0.0:
            raise ValueError("theta must be nonnegative")
        if self.norm not in _DUALS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if not 0 <= self.k < N:
            raise ValueError("floor(epsilon * N) must lie in [0, N)")

    @property
    def N(self) -> int:
        return self.scenarios.shape[0]

    @property
    def P(self) -> int:
        return self.scenarios.shape[1]

    @property
    def K(self) -> int:
        return self.scenarios.shape[2]

    @property
    def L(self) -> int:
        return self.safety.L

    @property
    def dual_tag(self) -> DualNormTag:
        return DualNormTag(self.norm)

    @property
    def k(self) -> int:
        """floor(epsilon * N) with a guard against float-floor off-by-one."""
        return floor_eps_n(self.epsilon, self.scenarios.shape[0])

    def row_values(self, x, i: int) -> np.ndarray:
        return self.safety.row_values(x, self.scenarios[i])


def floor_eps_n(epsilon: float, n: int) -> int:
    """floor(epsilon * n); exact integers within 1e-9 are kept as themselves."""
    t = epsilon * n
    r = round(t)
    if abs(t - r) <= 1e-9:
        return int(r)
    return int(np.floor(t))


def eval_distance(x, xi, spec: SafetySpec, tag: DualNormTag, tol: float = DEGENERACY_TOL) -> float:
    """Distance from scenario xi to the unsafe region, given decision x.

    Returns max{0, min_p s_p(x, xi) / ||b - A x||_*}.  The value does not
    depend on whether the safety rows are strict or weak.

    Raises DegenerateDirection when ||b - A x||_* <= tol, the b = A x case
    whose semantics depend on the closure and is classified separately.
    """
    u = spec.direction(x)
    denom = tag.dual_value(u)
    if denom <= tol:
        raise DegenerateDirection(f"||b - A x||_* = {denom:.3e} <= {tol:.1e}")
    vals = spec.row_values(x, xi)
    return max(0.0, float(vals.min()) / denom)


def saa_violation_count(x, inst: Instance) -> int:
    """Number of scenarios falling outside the safety set at x.

    Closed rows violate on min_p s_p < 0, open rows already on min_p s_p <= 0.
    """
    x = np.asarray(x, dtype=float)
    u = inst.safety.direction(x)
    offsets = inst.safety.d - inst.safety.a @ x
    vals = inst.scenarios @ u + offsets  # (N, P)
    mins = vals.min(axis=1)
    if inst.safety.closedness == CLOSED:
        return int((mins < 0.0).sum())
    return int((mins <= 0.0).sum())


def lift_distinct_matrices(blocks) -> SafetySpec:
    """Fold rows with distinct coefficient matrices into one shared-direction spec.

    blocks is a sequence of per-row tuples (A_p, b_p, a_p, d_p) with A_p of
    shape (K_p, L).  The lifted spec stacks the direction blocks, so its K is
    the sum of the K_p and its P is unchanged.  Scenario blocks must be lifted
    with :func:`lift_scenario` to place each xi_p in its own slot.
    """
    mats, dirs, avecs, offs = [], [], [], []
    L = None
    for A_p, b_p, a_p, d_p in blocks:
        A_p = np.asarray(A_p, dtype=float)
        b_p = np.asarray(b_p, dtype=float)
        a_p = np.asarray(a_p, dtype=float)
        if A_p.ndim != 2 or b_p.shape != (A_p.shape[0],):
            raise DimensionMismatch("each block needs A_p (K_p, L) and b_p (K_p,)")
        if L is None:
            L = A_p.shape[1]
        if A_p.shape[1] != L or a_p.shape != (L,):
            raise DimensionMismatch("blocks disagree on the number of variables")
        mats.append(A_p)
        dirs.append(b_p)
        avecs.append(a_p)
        offs.append(float(d_p))
    if not mats:
        raise DimensionMismatch("at least one row block required")
    A = np.vstack(mats)
    b = np.concatenate(dirs)
    return SafetySpec(A=A, a=np.vstack([v[None, :] for v in avecs]), b=b, d=np.array(offs))


def lift_scenario(xi_blocks, sizes) -> np.ndarray:
    """Place per-row subvectors on the structured support of the lifted space.

    xi_blocks[p] has length sizes[p]; the result is a (P, sum(sizes)) array
    whose p-th row is zero except for xi_blocks[p] in slot p.
    """
    sizes = [int(s) for s in sizes]
    total = sum(sizes)
    P = len(sizes)
    out = np.zeros((P, total))
    off = 0
    for p, (blk, size) in enumerate(zip(xi_blocks, sizes)):
        blk = np.asarray(blk, dtype=float)
        if blk.shape != (size,):
            raise DimensionMismatch(f"block {p} has shape {blk.shape}, expected ({size},)")
        out[p, off:off + size] = blk
        off += size
    return out
