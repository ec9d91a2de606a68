"""Command-line surface: generate, build, strengthen, separate, solve, bench,
export, verify.

Every failure exits nonzero with a one-line diagnostic on stderr; output
files are written atomically so a failed run leaves nothing partial behind.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import apps, io, mixing, oracle, quantile, solver
from .errors import DrccpError
from .formulation import build_basic, build_improved, build_knapsack, compute_bigM_domain

QUANTILE_MODES = {
    "exact-individual": quantile.EXACT_INDIVIDUAL,
    "exact-joint": quantile.EXACT_JOINT,
    "covering": quantile.COVERING_CLOSED_FORM,
    "packing": quantile.PACKING_CLOSED_FORM,
    "resource": quantile.RESOURCE_RULE,
}


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load(path: str):
    inst, meta = io.read_instance(path)
    return inst, meta


def _resolve_big_m(inst, meta, args):
    if getattr(args, "big_m", None):
        from .formulation import BigMVector

        return BigMVector(np.full(inst.N, float(args.big_m)), "UserSupplied")
    if meta["kind"] in ("portfolio", "resource"):
        return apps.benchmark_bigM(meta["kind"], inst)
    return compute_bigM_domain(inst)


def _quantile_table(inst, meta, args):
    mode_name = getattr(args, "quantile_mode", None)
    if mode_name is None:
        if meta["kind"] in ("portfolio", "resource"):
            return apps.benchmark_quantile_table(meta["kind"], inst)
        mode_name = "exact-individual"
    cfg = quantile.QuantileConfig(mode=QUANTILE_MODES[mode_name])
    qt = quantile.build_quantile_table(inst, cfg)
    return qt.coefficient_safe(inst)


def _build_model(inst, meta, args, formulation):
    M = _resolve_big_m(inst, meta, args)
    qt = None
    if formulation in ("improved", "mixing"):
        qt = _quantile_table(inst, meta, args)
        model = build_improved(inst, M, qt)
    elif formulation == "knapsack":
        model = build_knapsack(inst, M)
    elif formulation == "basic":
        model = build_basic(inst, M)
    else:
        raise DrccpError(f"unknown formulation {formulation!r}")
    return model, qt, M


def cmd_generate(args) -> int:
    if args.kind == "portfolio":
        cfg = apps.PortfolioConfig(
            K=args.assets,
            w=args.target_return,
            N=args.n,
            epsilon=args.epsilon,
            theta=args.theta,
            norm=args.norm,
            seed=args.seed,
        )
        inst = apps.gen_portfolio(cfg)
    else:
        cfg = apps.ResourceConfig(
            D=args.resources,
            P=args.groups,
            N=args.n,
            epsilon=args.epsilon,
            theta=args.theta,
            norm=args.norm,
            seed=args.seed,
        )
        inst = apps.gen_resource(cfg)
    io.write_instance(inst, args.output, kind=args.kind, seed=args.seed)
    print(f"wrote {args.kind} instance N={inst.N} to {args.output}")
    return 0


def cmd_strengthen(args) -> int:
    inst, meta = _load(args.instance)
    qt = _quantile_table(inst, meta, args)
    io.write_quantile_cache(qt, meta["hash"], args.output)
    print(f"wrote quantile cache mode={qt.mode} k={qt.k} to {args.output}")
    return 0


def cmd_build(args) -> int:
    inst, meta = _load(args.instance)
    model, qt, _ = _build_model(inst, meta, args, args.formulation)
    io.write_model(model, args.output, style=args.style)
    if qt is not None and args.cache:
        io.write_quantile_cache(qt, meta["hash"], args.cache)
        print(f"wrote quantile cache to {args.cache}")
    print(f"wrote {args.formulation} model to {args.output}")
    return 0


def cmd_separate(args) -> int:
    inst, meta = _load(args.instance)
    model, qt, _ = _build_model(inst, meta, args, "improved")
    if qt is None or qt.h_values is None:
        return _fail("separation needs a quantile table with scenario values")
    profiles = mixing.profiles_from_table(inst, qt)
    source = mixing.MixingCutSource(profiles, inst.L)
    sol = solver.solve_lp(model)
    if sol.status != solver.OPTIMAL:
        return _fail(f"root relaxation is {sol.status}")
    rows = source.separate(sol.primal)
    io.write_cut_dump(source.generated, meta["hash"], args.output)
    print(f"separated {len(rows)} cuts at the root relaxation; wrote {args.output}")
    return 0


def cmd_solve(args) -> int:
    inst, meta = _load(args.instance)
    model, qt, _ = _build_model(inst, meta, args, args.formulation)
    cuts = None
    if args.formulation == "mixing":
        if qt is None or qt.h_values is None:
            return _fail("mixing needs a quantile table with scenario values")
        cuts = mixing.MixingCutSource(mixing.profiles_from_table(inst, qt), inst.L)
    log = print if args.progress else None
    report = solver.solve_mip(
        model,
        cuts=cuts,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
        log=log,
    )
    print(
        f"status={report.status} ub={report.upper_bound:.10g} "
        f"lb={report.lower_bound:.10g} gap={report.gap_percent:.4g} "
        f"nodes={report.nodes} cuts={report.cuts_added} "
        f"root={report.root_value:.10g} time={report.wall_time:.2f}"
    )
    return 0 if report.status in (solver.OPTIMAL, solver.BUDGET_EXHAUSTED) else 1


def _bench_one(task):
    kind, n, theta, trial, formulation, epsilon, norm, time_limit, node_limit = task
    if kind == "portfolio":
        cfg = apps.PortfolioConfig(N=n, theta=theta, epsilon=epsilon, norm=norm, seed=trial)
    else:
        cfg = apps.ResourceConfig(N=n, theta=theta, epsilon=epsilon, norm=norm, seed=trial)
    model, qt, _ = apps.assemble_benchmark(kind, cfg, formulation)
    cuts = None
    if formulation == "mixing" and qt is not None and qt.h_values is not None:
        inst = apps.gen_portfolio(cfg) if kind == "portfolio" else apps.gen_resource(cfg)
        cuts = mixing.MixingCutSource(mixing.profiles_from_table(inst, qt), inst.L)
    return solver.solve_mip(model, cuts=cuts, time_limit=time_limit, node_limit=node_limit)


def cmd_bench(args) -> int:
    n_values = [int(v) for v in args.n_list.split(",")]
    thetas = [float(v) for v in args.theta_list.split(",")]
    rows = []
    for n in n_values:
        for theta in thetas:
            tasks = [
                (
                    args.kind,
                    n,
                    theta,
                    trial,
                    args.formulation,
                    args.epsilon,
                    args.norm,
                    args.time_limit,
                    args.node_limit,
                )
                for trial in range(args.trials)
            ]
            if args.workers > 1:
                with ProcessPoolExecutor(max_workers=args.workers) as pool:
                    reports = list(pool.map(_bench_one, tasks))
            else:
                reports = [_bench_one(t) for t in tasks]
            rows.append(io.BenchRow.from_reports(n, theta, reports))
    print(format_table_header(args))
    print(io.format_bench_table(rows))
    return 0


def format_table_header(args) -> str:
    return (
        f"benchmark kind={args.kind} formulation={args.formulation} "
        f"epsilon={args.epsilon} trials={args.trials}"
    )


def cmd_export(args) -> int:
    inst, meta = _load(args.instance)
    model, _, _ = _build_model(inst, meta, args, args.formulation)
    io.write_model(model, args.output, style=args.style)
    print(f"exported {args.formulation} model ({args.style}) to {args.output}")
    return 0


def cmd_verify(args) -> int:
    inst, meta = _load(args.instance)
    if inst.N > oracle.MAX_ORACLE_N:
        return _fail(f"verify needs N <= {oracle.MAX_ORACLE_N} (got {inst.N})")
    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        line = f"{'PASS' if ok else 'FAIL'} {name}"
        if detail:
            line += f" ({detail})"
        print(line)
        failures += 0 if ok else 1

    ref, ref_sol = oracle.enumerate_optimum(inst, "knapsack")
    for formulation in ("knapsack", "improved", "mixing"):
        model, qt, M = _build_model(inst, meta, args, formulation)
        cuts = None
        if formulation == "mixing" and qt is not None and qt.h_values is not None:
            cuts = mixing.MixingCutSource(mixing.profiles_from_table(inst, qt), inst.L)
        report = solver.solve_mip(model, cuts=cuts, time_limit=args.time_limit)
        rel = abs(report.upper_bound - ref) / max(1.0, abs(ref))
        check(
            f"optimum[{formulation}] matches oracle",
            report.status == solver.OPTIMAL and rel <= 1e-6,
            f"mip={report.upper_bound:.10g} oracle={ref:.10g}",
        )
    if ref_sol is not None:
        _, _, M = _build_model(inst, meta, args, "knapsack")
        x = ref_sol["x"]
        worst = 0.0
        for i in range(inst.N):
            vals = np.abs(inst.row_values(x, i))
            worst = max(worst, float(vals.max() - M.values[i]))
        check("big-M valid at oracle optimum", worst <= 1e-7, f"excess={worst:.3g}")
        check(
            "oracle optimum is robust-feasible",
            oracle.membership_drccp(x, inst),
        )
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="drccp",
        description="Robust chance-constraint formulations: build, strengthen, solve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formulation=True):
        p.add_argument("--epsilon", type=float, default=0.1)
        p.add_argument("--theta", type=float, default=0.05)
        p.add_argument("--norm", choices=["l1", "l2", "linf"], default="l2")
        p.add_argument("--seed", type=int, default=0)
        if formulation:
            p.add_argument(
                "--formulation",
                choices=["basic", "knapsack", "improved", "mixing"],
                default="improved",
            )
            p.add_argument("--quantile-mode", choices=sorted(QUANTILE_MODES))
            p.add_argument("--big-m", type=float, help="override big-M with a constant")
            p.add_argument("--time-limit", type=float, default=600.0)
            p.add_argument("--node-limit", type=int, default=10**6)

    p = sub.add_parser("generate", help="write a benchmark instance file")
    p.add_argument("--kind", choices=["portfolio", "resource"], required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--assets", type=int, default=50)
    p.add_argument("--target-return", type=float, default=1.0)
    p.add_argument("--resources", type=int, default=10)
    p.add_argument("--groups", type=int, default=20)
    common(p, formulation=False)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("strengthen", help="compute and cache the quantile table")
    p.add_argument("-i", "--instance", required=True)
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_strengthen)

    p = sub.add_parser("build", help="build a formulation and export its model text")
    p.add_argument("-i", "--instance", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--cache", help="also write the quantile cache here")
    p.add_argument(
        "--style",
        choices=[io.LINEARIZED_TEXT, io.CONIC_ANNOTATED_TEXT],
        default=io.LINEARIZED_TEXT,
    )
    common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("separate", help="one root separation round; dump the cuts")
    p.add_argument("-i", "--instance", required=True)
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("solve", help="solve an instance and print the report")
    p.add_argument("-i", "--instance", required=True)
    p.add_argument("--progress", action="store_true", help="print node log lines")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="sweep an (N, theta) grid and print the table")
    p.add_argument("--kind", choices=["portfolio", "resource"], required=True)
    p.add_argument("--n-list", default="20")
    p.add_argument("--theta-list", default="0.05")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="export a model file for external solvers")
    p.add_argument("-i", "--instance", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument(
        "--style",
        choices=[io.LINEARIZED_TEXT, io.CONIC_ANNOTATED_TEXT],
        default=io.LINEARIZED_TEXT,
    )
    common(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("verify", help="run the oracle suite on a small instance")
    p.add_argument("-i", "--instance", required=True)
    common(p)
    p.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DrccpError, ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
