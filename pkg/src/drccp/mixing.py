"""Mixing (star) inequalities over the indicator knapsack substructure.

A sorted profile holds the N scenario values of one probe direction in
non-increasing order.  Only the k scenarios strictly above the (k+1)-th
largest value (the threshold) can carry a cut coefficient; the maximally
violated cut at a fractional point is found by a single scan over that
prefix, so separation cost is dominated by the sort.
"""

from dataclasses import dataclass

import numpy as np

from .core import Instance
from .errors import RedundantIndex, TooManySubsets
from .formulation import GE, LinearRow

SEPARATION_TOL = 1e-6
MAX_ENUM_K = 20


@dataclass(frozen=True)
class SortedBaseProfile:
    """Scenario values of one probe direction, sorted for separation.

    mu       : (L,) probe direction (coefficients of x).
    h_sorted : tuple of (scenario index, value) pairs, non-increasing in
               value, ties broken by ascending scenario index.
    k        : knapsack capacity floor(epsilon * N).
    key      : optional identity of the probe, e.g. the (i, p) pair.
    """

    mu: np.ndarray
    h_sorted: tuple
    k: int
    key: tuple = ()

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        vals = [v for _, v in self.h_sorted]
        if any(vals[a] < vals[a + 1] for a in range(len(vals) - 1)):
            raise ValueError("h_sorted must be non-increasing")
        if not 0 <= self.k < len(self.h_sorted):
            raise ValueError("k must lie in [0, N)")

    @classmethod
    def from_values(cls, mu, values, k: int, key: tuple = ()) -> "SortedBaseProfile":
        order = sorted(range(len(values)), key=lambda j: (-values[j], j))
        pairs = tuple((j, float(values[j])) for j in order)
        return cls(mu, pairs, k, key)

    @property
    def threshold(self) -> float:
        """(k+1)-th largest value; rhs of the always-valid base inequality."""
        return self.h_sorted[self.k][1]

    def position(self, scenario: int) -> int:
        for pos, (j, _) in enumerate(self.h_sorted):
            if j == scenario:
                return pos
        raise KeyError(f"scenario {scenario} not in profile")

    def candidates(self):
        """(scenario, value) pairs strictly above the threshold, descending."""
        thr = self.threshold
        return [(j, v) for j, v in self.h_sorted[: self.k] if v > thr]


@dataclass(frozen=True)
class MixingCut:
    """mu'x + sum_i coeff_i z_{J_i} >= rhs with telescoping coefficients.

    J is ordered by non-increasing value; coefficient i is the drop from
    value i to value i+1, the last one landing on the threshold.  An empty J
    is the degenerate always-valid inequality mu'x >= threshold.
    """

    mu: np.ndarray
    J: tuple
    coefficients: tuple
    rhs: float
    threshold: float
    key: tuple = ()

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if len(self.J) != len(self.coefficients):
            raise ValueError("J and coefficients must align")
        if any(c < -1e-12 for c in self.coefficients):
            raise ValueError("cut coefficients must be nonnegative")

    def lhs(self, x, z) -> float:
        val = float(self.mu @ np.asarray(x, dtype=float))
        for j, c in zip(self.J, self.coefficients):
            val += c * float(z[j])
        return val

    def violation(self, x, z) -> float:
        return self.rhs - self.lhs(x, z)


def _cut_from_chain(profile: SortedBaseProfile, chain) -> MixingCut:
    """Build the telescoping cut for an ordered (scenario, value) chain."""
    if not chain:
        return MixingCut(
            profile.mu, (), (), profile.threshold, profile.threshold, profile.key
        )
    coeffs = []
    for a in range(len(chain)):
        nxt = chain[a + 1][1] if a + 1 < len(chain) else profile.threshold
        coeffs.append(chain[a][1] - nxt)
    return MixingCut(
        profile.mu,
        tuple(j for j, _ in chain),
        tuple(coeffs),
        chain[0][1],
        profile.threshold,
        profile.key,
    )


def base_inequality(profile: SortedBaseProfile, scenario: int) -> MixingCut:
    """Single-scenario inequality mu'x + (h_i - threshold) z_i >= h_i.

    Valid by the pigeonhole argument; scenarios at or below the threshold
    position produce nothing new, and strictly-below ones raise
    RedundantIndex.
    """
    pos = profile.position(scenario)
    if pos > profile.k:
        raise RedundantIndex(
            f"scenario {scenario} sits at sorted position {pos} > k = {profile.k}"
        )
    value = profile.h_sorted[pos][1]
    if value <= profile.threshold:
        return _cut_from_chain(profile, [])
    return _cut_from_chain(profile, [(scenario, value)])


def strengthened_base_pair(i: int, p: int, qt, inst: Instance):
    """Quantile row and its indicator-relaxed companion for probe (i, p).

    Returns (mu'x >= q_ip,
             mu'x + (b'xi + d) + (-(b'xi + d) - q_ip) z_i >= 0) as rows over
    the model variables.
    """
    mu = inst.safety.row_coefficient(inst.scenarios[i])[p]
    const = float(inst.safety.row_constant(inst.scenarios[i])[p])
    q_ip = float(qt.q[i, p])
    coeffs = {f"x_{j}": float(c) for j, c in enumerate(mu) if c != 0.0}
    quantile_row = LinearRow(dict(coeffs), GE, q_ip, "mixing_base", (i, p))
    relaxed = dict(coeffs)
    relaxed[f"z_{i}"] = -const - q_ip
    relaxed_row = LinearRow(relaxed, GE, -const, "mixing_base_relaxed", (i, p))
    return quantile_row, relaxed_row


def _scan_records(candidates, z_star, counter=None):
    """Keep candidates whose indicator value sets a new strict minimum."""
    chain = []
    zcur = 1.0
    for j, v in candidates:
        if counter is not None:
            counter[0] += 1
        zj = float(z_star[j])
        if zj < zcur:
            chain.append((j, v))
            zcur = zj
    return chain


def separate(
    profile: SortedBaseProfile,
    x_star,
    z_star,
    tol: float = SEPARATION_TOL,
) -> MixingCut:
    """Maximally violated mixing cut at a fractional point, or None.

    The optimal index set is the chain of strictly-decreasing indicator
    records over the sorted prefix, so the scan is linear after the sort.
    """
    if profile.threshold == -np.inf:
        return None
    chain = _scan_records(profile.candidates(), z_star)
    cut = _cut_from_chain(profile, chain)
    if cut.violation(x_star, z_star) > tol:
        return cut
    return None


def enumerate_all_cuts(profile: SortedBaseProfile):
    """Every mixing cut of the profile, degenerate one included (test oracle)."""
    if profile.k > MAX_ENUM_K:
        raise TooManySubsets(f"k = {profile.k} exceeds the enumeration guard")
    cands = profile.candidates()
    cuts = [_cut_from_chain(profile, [])]
    for mask in range(1, 1 << len(cands)):
        chain = [cands[a] for a in range(len(cands)) if mask >> a & 1]
        cuts.append(_cut_from_chain(profile, chain))
    return cuts


def count_separation_ops(values, z_star, k: int, x_mu_value: float = 0.0):
    """Separation from raw values with explicit operation counting.

    Counts one unit per sort comparison and per scan step, so the total
    tracks the N log N sort that dominates the routine.  Returns
    (cut or None, ops).
    """
    ops = [0]

    class _Key:
        __slots__ = ("val", "idx")

        def __init__(self, j):
            self.val = values[j]
            self.idx = j

        def __lt__(self, other):
            ops[0] += 1
            if self.val != other.val:
                return self.val > other.val
            return self.idx < other.idx

    order = sorted(range(len(values)), key=_Key)
    pairs = tuple((j, float(values[j])) for j in order)
    thr = pairs[k][1]
    cands = []
    for j, v in pairs[:k]:
        ops[0] += 1
        if v > thr:
            cands.append((j, v))
    chain = _scan_records(cands, z_star, counter=ops)
    coeffs = []
    for a in range(len(chain)):
        ops[0] += 1
        nxt = chain[a + 1][1] if a + 1 < len(chain) else thr
        coeffs.append(chain[a][1] - nxt)
    rhs = chain[0][1] if chain else thr
    lhs = x_mu_value + sum(c * float(z_star[j]) for (j, _), c in zip(chain, coeffs))
    if rhs - lhs > SEPARATION_TOL:
        cut = MixingCut(
            np.zeros(0), tuple(j for j, _ in chain), tuple(coeffs), rhs, thr
        )
        return cut, ops[0]
    return None, ops[0]


def cut_to_row(cut: MixingCut) -> LinearRow:
    """Express a mixing cut over the model's x/z variable names."""
    coeffs = {f"x_{j}": float(c) for j, c in enumerate(cut.mu) if c != 0.0}
    for j, c in zip(cut.J, cut.coefficients):
        if c != 0.0:
            coeffs[f"z_{j}"] = coeffs.get(f"z_{j}", 0.0) + float(c)
    return LinearRow(coeffs, GE, float(cut.rhs), "cut", (cut.key, cut.J))


def profiles_from_table(inst: Instance, qt) -> list:
    """One profile per probe direction (i, p) from a table with h values.

    +inf scenario values (infeasible scenarios) are clamped to the largest
    finite value, which stays a valid lower bound; profiles whose threshold
    is -inf carry no usable pigeonhole bound and are dropped.
    """
    if qt.h_values is None:
        return []
    out = []
    for i in range(inst.N):
        mus = inst.safety.row_coefficient(inst.scenarios[i])
        for p in range(inst.P):
            vals = np.array(qt.h_values[i, p], dtype=float)
            finite = vals[np.isfinite(vals)]
            if finite.size == 0:
                continue
            vals[vals == np.inf] = finite.max()
            profile = SortedBaseProfile.from_values(mus[p], vals, inst.k, key=(i, p))
            if profile.threshold == -np.inf:
                continue
            out.append(profile)
    return out


class MixingCutSource:
    """Separator pool fed to the solver's root loop.

    Deduplicates by (probe key, J); counts every row handed out.
    """

    def __init__(self, profiles, L: int, tol: float = SEPARATION_TOL):
        self.profiles = list(profiles)
        self.L = L
        self.tol = tol
        self.seen = set()
        self.generated = []

    def separate(self, primal: dict):
        x = np.array([primal[f"x_{j}"] for j in range(self.L)])
        z = {}
        for name, val in primal.items():
            if name.startswith("z_"):
                z[int(name[2:])] = val
        rows = []
        for profile in self.profiles:
            cut = separate(profile, x, z, self.tol)
            if cut is None:
                continue
            sig = (profile.key, cut.J)
            if sig in self.seen:
                continue
            self.seen.add(sig)
            self.generated.append(cut)
            rows.append(cut_to_row(cut))
        return rows
