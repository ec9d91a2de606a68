"""Textual file formats: instances, quantile caches, cut dumps, model export.

All formats are line-oriented with versioned headers and repr-encoded floats
(shortest exact decimal), so serialization round-trips bit-for-bit and the
files diff cleanly.  Writes go through a temp file and an atomic rename, so
a failed command never leaves a partial output behind.
"""

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .apps import PortfolioStructure, ResourceStructure
from .core import Box, Instance, SafetySpec
from .formulation import BINARY, EQ, GE, LE, MipModel
from .quantile import QuantileTable
from .solver import gap_percent

INSTANCE_MAGIC = "drccp-instance-v1"
CACHE_MAGIC = "drccp-quantile-cache-v1"
CUTS_MAGIC = "drccp-cuts-v1"
MODEL_MAGIC = "drccp-model-v1"

LINEARIZED_TEXT = "linearized"
CONIC_ANNOTATED_TEXT = "conic-annotated"


def _fmt(x) -> str:
    return repr(float(x))


def _fmt_vec(v) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v, dtype=float).ravel())


def _parse_vec(tokens):
    return np.array([float(t) for t in tokens], dtype=float)


def atomic_write(path: str, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _body_hash(lines) -> str:
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def instance_body(inst: Instance, kind: str = "generic", seed=None):
    lines = [
        f"kind {kind}",
        f"seed {'none' if seed is None else int(seed)}",
        f"closedness {inst.safety.closedness}",
        f"norm {inst.norm}",
        f"dims {inst.N} {inst.P} {inst.K} {inst.L}",
        f"epsilon {_fmt(inst.epsilon)}",
        f"theta {_fmt(inst.theta)}",
        f"cost {_fmt_vec(inst.cost)}",
        f"domain_lb {_fmt_vec(inst.domain.lb)}",
        f"domain_ub {_fmt_vec(inst.domain.ub)}",
        f"safety_b {_fmt_vec(inst.safety.b)}",
        f"safety_d {_fmt_vec(inst.safety.d)}",
    ]
    for kk in range(inst.K):
        lines.append(f"safety_A {kk} {_fmt_vec(inst.safety.A[kk])}")
    for p in range(inst.P):
        lines.append(f"safety_a {p} {_fmt_vec(inst.safety.a[p])}")
    for i in range(inst.N):
        for p in range(inst.P):
            lines.append(f"scenario {i} {p} {_fmt_vec(inst.scenarios[i, p])}")
    st = inst.structure
    if isinstance(st, PortfolioStructure):
        lines.append("structure portfolio")
        lines.append(f"w {_fmt(st.w)}")
    elif isinstance(st, ResourceStructure):
        lines.append("structure resource")
        lines.append(f"resource_dims {st.D} {st.P}")
        for i in range(inst.N):
            lines.append(f"rho {i} {_fmt_vec(st.rho[i])}")
        for i in range(inst.N):
            for d in range(st.D):
                lines.append(f"mu {i} {d} {_fmt_vec(st.mu[i, d])}")
        for i in range(inst.N):
            lines.append(f"lam {i} {_fmt_vec(st.lam[i])}")
    else:
        lines.append("structure none")
    return lines


def instance_hash(inst: Instance, kind: str = "generic", seed=None) -> str:
    return _body_hash(instance_body(inst, kind, seed))


def serialize_instance(inst: Instance, kind: str = "generic", seed=None) -> str:
    body = instance_body(inst, kind, seed)
    return "\n".join([INSTANCE_MAGIC, f"hash {_body_hash(body)}"] + body) + "\n"


def write_instance(inst: Instance, path: str, kind: str = "generic", seed=None):
    atomic_write(path, serialize_instance(inst, kind, seed))


def parse_instance(text: str):
    """Inverse of serialize_instance; returns (instance, meta dict)."""
    lines = text.strip("\n").split("\n")
    if not lines or lines[0] != INSTANCE_MAGIC:
        raise ValueError("not a drccp instance file")
    tag, stored = lines[1].split()
    if tag != "hash":
        raise ValueError("missing hash line")
    body = lines[2:]
    if _body_hash(body) != stored:
        raise ValueError("instance file hash mismatch (corrupt or edited)")
    fields = {}
    rows = {"safety_A": {}, "safety_a": {}, "scenario": {}, "rho": {}, "mu": {}, "lam": {}}
    for line in body:
        parts = line.split()
        key = parts[0]
        if key in ("safety_A", "safety_a"):
            rows[key][int(parts[1])] = _parse_vec(parts[2:])
        elif key == "scenario":
            rows[key][(int(parts[1]), int(parts[2]))] = _parse_vec(parts[3:])
        elif key == "rho":
            rows[key][int(parts[1])] = _parse_vec(parts[2:])
        elif key == "mu":
            rows[key][(int(parts[1]), int(parts[2]))] = _parse_vec(parts[3:])
        elif key == "lam":
            rows[key][int(parts[1])] = _parse_vec(parts[2:])
        else:
            fields[key] = parts[1:]
    N, P, K, L = (int(v) for v in fields["dims"])
    A = np.vstack([rows["safety_A"][kk] for kk in range(K)])
    a = np.vstack([rows["safety_a"][p] for p in range(P)])
    scenarios = np.empty((N, P, K))
    for i in range(N):
        for p in range(P):
            scenarios[i, p] = rows["scenario"][(i, p)]
    safety = SafetySpec(
        A=A,
        a=a,
        b=_parse_vec(fields["safety_b"]),
        d=_parse_vec(fields["safety_d"]),
        closedness=fields["closedness"][0],
    )
    structure = None
    st_kind = fields["structure"][0]
    if st_kind == "portfolio":
        structure = PortfolioStructure(w=float(fields["w"][0]))
    elif st_kind == "resource":
        D, RP = (int(v) for v in fields["resource_dims"])
        rho = np.vstack([rows["rho"][i] for i in range(N)])
        mu = np.empty((N, D, RP))
        for i in range(N):
            for d in range(D):
                mu[i, d] = rows["mu"][(i, d)]
        lam = np.vstack([rows["lam"][i] for i in range(N)])
        structure = ResourceStructure(D=D, P=RP, rho=rho, mu=mu, lam=lam)
    inst = Instance(
        scenarios=scenarios,
        epsilon=float(fields["epsilon"][0]),
        theta=float(fields["theta"][0]),
        norm=fields["norm"][0],
        domain=Box(_parse_vec(fields["domain_lb"]), _parse_vec(fields["domain_ub"])),
        cost=_parse_vec(fields["cost"]),
        safety=safety,
        structure=structure,
    )
    seed_tok = fields["seed"][0]
    meta = {
        "kind": fields["kind"][0],
        "seed": None if seed_tok == "none" else int(seed_tok),
        "hash": stored,
    }
    return inst, meta


def read_instance(path: str):
    with open(path) as fh:
        return parse_instance(fh.read())


def write_quantile_cache(qt: QuantileTable, inst_hash: str, path: str):
    """One record per (p, i): line-oriented, replayable without the table."""
    lines = [CACHE_MAGIC, f"instance {inst_hash}"]
    N, P = qt.q.shape
    for p in range(P):
        for i in range(N):
            lines.append(
                f"q p={p} i={i} mode={qt.mode} k={qt.k} value={_fmt(qt.q[i, p])}"
            )
    atomic_write(path, "\n".join(lines) + "\n")


def read_quantile_cache(path: str, expect_hash: str = None):
    """Returns (records dict (p, i) -> (mode, k, value), instance hash)."""
    with open(path) as fh:
        lines = fh.read().strip("\n").split("\n")
    if not lines or lines[0] != CACHE_MAGIC:
        raise ValueError("not a quantile cache file")
    stored = lines[1].split()[1]
    if expect_hash is not None and stored != expect_hash:
        raise ValueError("quantile cache belongs to a different instance")
    records = {}
    for line in lines[2:]:
        if not line.startswith("q "):
            continue
        kv = dict(tok.split("=", 1) for tok in line.split()[1:])
        records[(int(kv["p"]), int(kv["i"]))] = (
            kv["mode"],
            int(kv["k"]),
            float(kv["value"]),
        )
    return records, stored


def cache_to_table(records, N: int, P: int) -> QuantileTable:
    modes = {rec[0] for rec in records.values()}
    ks = {rec[1] for rec in records.values()}
    if len(modes) != 1 or len(ks) != 1:
        raise ValueError("cache mixes modes or k values")
    q = np.empty((N, P))
    q.fill(np.nan)
    for (p, i), (_, _, value) in records.items():
        q[i, p] = value
    if np.isnan(q).any():
        raise ValueError("cache does not cover every (p, i) record")
    return QuantileTable(None, q, modes.pop(), ks.pop())


def write_cut_dump(cuts, inst_hash: str, path: str):
    """Audit/replay dump: probe identity, index set, coefficients, rhs."""
    lines = [CUTS_MAGIC, f"instance {inst_hash}"]
    for cut in cuts:
        i, p = (cut.key + (None, None))[:2] if cut.key else (None, None)
        lines.append(
            "cut "
            f"i={i} p={p} "
            f"J={','.join(str(j) for j in cut.J)} "
            f"coeffs={','.join(_fmt(c) for c in cut.coefficients)} "
            f"rhs={_fmt(cut.rhs)} threshold={_fmt(cut.threshold)}"
        )
    atomic_write(path, "\n".join(lines) + "\n")


def _terms(coeffs) -> str:
    parts = []
    for name in sorted(coeffs):
        c = coeffs[name]
        if c == 0.0:
            continue
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(c))} {name}")
    return " ".join(parts) if parts else "+ 0.0"


def _cone_oa_rows(cone):
    """Initial supporting rows for one cone: out >= +-scale*v_k and out >= 0."""
    rows = []
    for kk, (coeffs, const) in enumerate(cone.inputs):
        for sign in (1.0, -1.0):
            row = dict(cone.out)
            for name, c in coeffs.items():
                row[name] = row.get(name, 0.0) - sign * cone.scale * c
            rows.append((f"conic_oa[{kk},{'p' if sign > 0 else 'm'}]", row, GE,
                         sign * cone.scale * const))
    rows.append(("conic_oa[base]", dict(cone.out), GE, 0.0))
    return rows


def export_model(model: MipModel, style: str = LINEARIZED_TEXT) -> str:
    """Algebraic text export: one row per line, `label: terms sense rhs`.

    LINEARIZED_TEXT replaces cone rows with their current outer-approximation
    rows; CONIC_ANNOTATED_TEXT appends a comment block carrying the exact
    cone data for conic-capable consumers.  Output bytes are deterministic.
    """
    if style not in (LINEARIZED_TEXT, CONIC_ANNOTATED_TEXT):
        raise ValueError(f"unknown export style {style!r}")
    lines = [f"\\ {MODEL_MAGIC} {style}", f"\\ name {model.name}"]
    lines.append("MINIMIZE")
    lines.append(f" obj: {_terms(model.objective)}")
    lines.append("SUBJECT TO")
    for row in model.linear_rows:
        key = ",".join(str(kk) for kk in row.key)
        label = f"{row.label}[{key}]" if key else row.label
        lines.append(f" {label}: {_terms(row.coeffs)} {row.sense} {_fmt(row.rhs)}")
    for cone in model.cone_rows:
        for label, coeffs, sense, rhs in _cone_oa_rows(cone):
            lines.append(f" {label}: {_terms(coeffs)} {sense} {_fmt(rhs)}")
    lines.append("BOUNDS")
    for var in model.variables:
        lo = "-inf" if var.lb == -np.inf else _fmt(var.lb)
        hi = "+inf" if var.ub == np.inf else _fmt(var.ub)
        lines.append(f" {lo} <= {var.name} <= {hi}")
    binaries = [v.name for v in model.variables if v.kind == BINARY]
    lines.append("BINARIES")
    lines.append(" " + " ".join(binaries) if binaries else " ")
    if style == CONIC_ANNOTATED_TEXT:
        for idx, cone in enumerate(model.cone_rows):
            lines.append(f"\\ CONE {idx} norm={cone.dual} scale={_fmt(cone.scale)}")
            lines.append(f"\\ CONE {idx} OUT {_terms(cone.out)}")
            for kk, (coeffs, const) in enumerate(cone.inputs):
                lines.append(
                    f"\\ CONE {idx} INPUT {kk} const={_fmt(const)} {_terms(coeffs)}"
                )
        lines.append("\\ END CONES")
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_model(model: MipModel, path: str, style: str = LINEARIZED_TEXT):
    atomic_write(path, export_model(model, style))


@dataclass
class BenchRow:
    """One (N, theta) cell of the benchmark table, aggregated over trials.

    Column semantics follow the study tables: Slv(Fnd) counts instances
    solved to optimality (found a feasible solution); Time(Gap) averages the
    time of solved instances and the final gap of unsolved-but-found ones;
    R.time and R.gap average root statistics; Cuts averages separated cuts.
    """

    N: int
    theta: float
    solved: int
    found: int
    time_avg: float
    gap_avg: float
    root_time_avg: float
    root_gap_avg: float
    root_found: int
    cuts_avg: float

    @classmethod
    def from_reports(cls, N, theta, reports, root_times=None):
        solved = [r for r in reports if r.status == "optimal"]
        found = [r for r in reports if np.isfinite(r.upper_bound)]
        unsolved_found = [
            r for r in found if r.status != "optimal"
        ]
        rooted = [r for r in found if np.isfinite(r.root_value)]
        time_avg = float(np.mean([r.wall_time for r in solved])) if solved else np.nan
        gap_avg = (
            float(np.mean([r.gap_percent for r in unsolved_found]))
            if unsolved_found
            else np.nan
        )
        root_gap_avg = (
            float(np.mean([r.root_gap_percent for r in rooted])) if rooted else np.nan
        )
        if root_times is None:
            root_times = [np.nan for _ in reports]
        return cls(
            N=N,
            theta=theta,
            solved=len(solved),
            found=len(found),
            time_avg=time_avg,
            gap_avg=gap_avg,
            root_time_avg=float(np.nanmean(root_times)) if len(root_times) else np.nan,
            root_gap_avg=root_gap_avg,
            root_found=len(rooted),
            cuts_avg=float(np.mean([r.cuts_added for r in reports])) if reports else 0.0,
        )


def _star(x, fmt="{:.2f}"):
    return "*" if x is None or (isinstance(x, float) and np.isnan(x)) else fmt.format(x)


def format_bench_table(rows) -> str:
    header = (
        f"{'N':>6} {'theta':>9} {'Slv(Fnd)':>10} {'Time(Gap)':>18} "
        f"{'R.time':>8} {'R.gap(Fnd)':>12} {'Cuts':>8}"
    )
    out = [header, "-" * len(header)]
    for row in rows:
        slv = f"{row.solved}({row.found})"
        time_gap = f"{_star(row.time_avg)}({_star(row.gap_avg)})"
        rgap = f"{_star(row.root_gap_avg)}({row.root_found})"
        out.append(
            f"{row.N:>6} {row.theta:>9.4g} {slv:>10} {time_gap:>18} "
            f"{_star(row.root_time_avg):>8} {rgap:>12} {row.cuts_avg:>8.1f}"
        )
    return "\n".join(out)
