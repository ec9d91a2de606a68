"""Benchmark instance generators and application-specific assembly.

Generation uses the Philox 4x64 counter-based generator with the stream key
(seed, scenario index), so instances are byte-identical across platforms for
a given seed.  The resource-planning safety set folds the assignment and
demand rows (distinct coefficient matrices) into one shared direction via
the lifting trick, sharing a single constant coordinate so the ambiguity
term is theta * ||(x, y, 1)||_*.
"""

from dataclasses import dataclass

import numpy as np

from .core import CLOSED, L2, OPEN, Box, Instance, SafetySpec
from .errors import DimensionMismatch
from .formulation import build_basic, build_improved, build_knapsack
from .quantile import (
    COVERING_CLOSED_FORM,
    RESOURCE_RULE,
    QuantileConfig,
    build_quantile_table,
    portfolio_bigM,
    resource_bigM,
)

_COST_STREAM = 2**63
_MASK_STREAM = 2**63 + 1


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, index]))


@dataclass(frozen=True)
class PortfolioStructure:
    w: float


@dataclass(frozen=True)
class ResourceStructure:
    D: int
    P: int
    rho: np.ndarray  # (N, D) yields in (0, 1]
    mu: np.ndarray  # (N, D, P) service rates, structural zeros shared
    lam: np.ndarray  # (N, P) demands


@dataclass(frozen=True)
class PortfolioConfig:
    K: int = 50
    w: float = 1.0
    cost_range: tuple = (1, 100)
    yield_range: tuple = (0.8, 1.5)
    N: int = 100
    epsilon: float = 0.1
    theta: float = 0.05
    norm: str = L2
    seed: int = 0

    def __post_init__(self):
        if self.yield_range[0] <= 0.0:
            raise ValueError("yields must stay strictly positive")


@dataclass(frozen=True)
class ResourceConfig:
    D: int = 10
    P: int = 20
    N: int = 100
    epsilon: float = 0.1
    theta: float = 0.001
    norm: str = L2
    seed: int = 0
    cost_range: tuple = (1, 10)
    rho_range: tuple = (0.7, 1.0)
    mu_range: tuple = (0.0, 1.0)
    mu_zero_prob: float = 0.2
    lambda_range: tuple = (5.0, 15.0)


def gen_portfolio(cfg: PortfolioConfig) -> Instance:
    """Covering instance: pay c'x, demand xi'x > w with random yields.

    Single open safety row with direction b - A x = x, integer costs, yields
    uniform per coordinate.  Deterministic given (cfg, seed).
    """
    K = cfg.K
    lo, hi = cfg.yield_range
    scenarios = np.empty((cfg.N, 1, K))
    for i in range(cfg.N):
        scenarios[i, 0] = _stream(cfg.seed, i).uniform(lo, hi, size=K)
    cost = _stream(cfg.seed, _COST_STREAM).integers(
        cfg.cost_range[0], cfg.cost_range[1] + 1, size=K
    ).astype(float)
    safety = SafetySpec(
        A=-np.eye(K),
        a=np.zeros((1, K)),
        b=np.zeros(K),
        d=np.array([-cfg.w]),
        closedness=OPEN,
    )
    return Instance(
        scenarios=scenarios,
        epsilon=cfg.epsilon,
        theta=cfg.theta,
        norm=cfg.norm,
        domain=Box.nonnegative(K),
        cost=cost,
        safety=safety,
        structure=PortfolioStructure(w=cfg.w),
    )


def y_index(D: int, P: int, d: int, p: int) -> int:
    """Column of allocation variable y_dp in the stacked (x, y) vector."""
    return D + d * P + p


def gen_resource(cfg: ResourceConfig) -> Instance:
    """Resource planning: D assignment rows and P demand rows over (x, y) >= 0.

    Assignment row d reads rho_d x_d - sum_p y_dp >= 0 and demand row p reads
    sum_d mu_dp y_dp - lambda_p >= 0.  Rows carry distinct random matrices,
    so the instance is built in the lifted shared-direction space whose
    direction vector is (x, y, 1); the random demand lambda multiplies the
    shared constant coordinate.  Structural zeros of mu are drawn once and
    shared across scenarios so the demand rows keep a common support.
    """
    D, P, N = cfg.D, cfg.P, cfg.N
    L = D + D * P
    K = L + 1
    mask_rng = _stream(cfg.seed, _MASK_STREAM)
    mask = mask_rng.random((D, P)) >= cfg.mu_zero_prob
    for p in range(P):
        if not mask[:, p].any():
            mask[mask_rng.integers(D), p] = True

    rho = np.empty((N, D))
    mu = np.empty((N, D, P))
    lam = np.empty((N, P))
    for i in range(N):
        rng = _stream(cfg.seed, i)
        rho[i] = rng.uniform(cfg.rho_range[0], cfg.rho_range[1], size=D)
        mu[i] = rng.uniform(cfg.mu_range[0], cfg.mu_range[1], size=(D, P)) * mask
        lam[i] = rng.uniform(cfg.lambda_range[0], cfg.lambda_range[1], size=P)

    cost = np.zeros(L)
    cost[:D] = _stream(cfg.seed, _COST_STREAM).integers(
        cfg.cost_range[0], cfg.cost_range[1] + 1, size=D
    )

    A = np.zeros((K, L))
    A[:L, :L] = -np.eye(L)
    b = np.zeros(K)
    b[K - 1] = 1.0

    n_rows = D + P
    a = np.zeros((n_rows, L))
    for d in range(D):
        for p in range(P):
            a[d, y_index(D, P, d, p)] = 1.0
    d_vec = np.zeros(n_rows)

    scenarios = np.zeros((N, n_rows, K))
    for i in range(N):
        for d in range(D):
            scenarios[i, d, d] = rho[i, d]
        for p in range(P):
            for d in range(D):
                scenarios[i, D + p, y_index(D, P, d, p)] = mu[i, d, p]
            scenarios[i, D + p, K - 1] = -lam[i, p]

    safety = SafetySpec(A=A, a=a, b=b, d=d_vec, closedness=CLOSED)
    return Instance(
        scenarios=scenarios,
        epsilon=cfg.epsilon,
        theta=cfg.theta,
        norm=cfg.norm,
        domain=Box.nonnegative(L),
        cost=cost,
        safety=safety,
        structure=ResourceStructure(D=D, P=P, rho=rho, mu=mu, lam=lam),
    )


def benchmark_bigM(kind: str, inst: Instance):
    if kind == "portfolio":
        return portfolio_bigM(inst)
    if kind == "resource":
        return resource_bigM(inst)
    raise ValueError(f"unknown benchmark kind {kind!r}")


def benchmark_quantile_table(kind: str, inst: Instance):
    """Closed-form table for the benchmark, floored for safe coefficients."""
    mode = COVERING_CLOSED_FORM if kind == "portfolio" else RESOURCE_RULE
    qt = build_quantile_table(inst, QuantileConfig(mode=mode))
    return qt.coefficient_safe(inst)


def assemble_benchmark(kind: str, cfg, formulation: str):
    """Wire generator, big-M rule, quantile mode, and builder for one run.

    Returns (model, quantile_table, bigM); the table is None for the basic
    and knapsack formulations.  Formulation "mixing" builds the improved
    model; its cuts come from the table's scenario values at solve time.
    """
    if kind == "portfolio":
        inst = gen_portfolio(cfg)
    elif kind == "resource":
        inst = gen_resource(cfg)
    else:
        raise ValueError(f"unknown benchmark kind {kind!r}")
    return assemble_instance(kind, inst, formulation)


def assemble_instance(kind: str, inst: Instance, formulation: str):
    M = benchmark_bigM(kind, inst)
    if formulation == "basic":
        return build_basic(inst, M), None, M
    if formulation == "knapsack":
        return build_knapsack(inst, M), None, M
    if formulation in ("improved", "mixing"):
        qt = benchmark_quantile_table(kind, inst)
        return build_improved(inst, M, qt), qt, M
    raise ValueError(f"unknown formulation {formulation!r}")
