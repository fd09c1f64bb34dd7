"""Command-line front end: check, bench, thomson, compare.

Exit codes for ``check``: 0 the condition holds, 1 it fails, 2 the test
was inconclusive, 3 input/schema problems.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import bench as _bench
from . import problems as _problems
from .sosc import METHODS, Status, VerifyOptions, verify
from .stationary import MaxIterationsError, solve_thomson

_METHOD_ALIASES = {
    "cholesky": "cholesky",
    "chol": "cholesky",
    "diagonalization": "diagonalization",
    "diag": "diagonalization",
    "pcg": "pcg",
    "bht": "bht",
    "inertia": "inertia",
}


def _canonical_method(name: str) -> str:
    try:
        return _METHOD_ALIASES[name.strip().lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown method {name!r}; choose from {sorted(set(_METHOD_ALIASES))}"
        )


def _method_list(raw: str):
    return [_canonical_method(tok) for tok in raw.split(",") if tok.strip()]


def _int_list(raw: str):
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def _options_from_args(args) -> VerifyOptions:
    return VerifyOptions(
        variant=args.variant,
        basis_method=args.basis_method,
        tol_alpha=args.tol_alpha,
        tol_feas=args.tol_feas,
        pcg_tol=args.pcg_tol,
        tol_rank=args.tol_rank,
        fd_sigma=args.fd_sigma,
        seed=args.seed,
    )


def _add_tolerance_args(parser):
    parser.add_argument("--variant", choices=["modified", "classical"],
                        default="modified")
    parser.add_argument("--basis-method", choices=["qr_at", "svd", "qr_a", "lu_a"],
                        default="qr_at")
    parser.add_argument("--tol-alpha", type=float, default=0.0)
    parser.add_argument("--tol-feas", type=float, default=1e-8)
    parser.add_argument("--pcg-tol", type=float, default=1e-10)
    parser.add_argument("--tol-rank", type=float, default=None,
                        help="constraint rank guard; 0 disables, default scales "
                             "with the Jacobian norm")
    parser.add_argument("--fd-sigma", type=float, default=1e-6)
    parser.add_argument("--seed", type=int, default=0)


def _print_verdict(verdict, method: str) -> None:
    print(f"method:    {method}")
    print(f"verdict:   {verdict.status.value}")
    if verdict.step is not None:
        print(f"step:      {verdict.step}")
    if verdict.curvature is not None:
        print(f"curvature: {verdict.curvature:.17g}")
    if verdict.reason is not None:
        print(f"reason:    {verdict.reason}")
    diag = verdict.diagnostics
    print(f"operator products: {diag.get('operator_products', 0)}")
    print(f"continuations:     {diag.get('continuations', 0)}")
    if "minors" in diag:
        print(f"minors computed:   {diag['minors']}")
    if "inertia" in diag:
        print(f"inertia:           {diag['inertia']}")
    print(f"wall time [s]:     {diag.get('wall_time_s', 0.0):.6g}")


def cmd_check(args) -> int:
    try:
        problem = _problems.load_problem(args.problem)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    method = _canonical_method(args.method)
    verdict = verify(problem, method, _options_from_args(args))
    _print_verdict(verdict, method)
    if verdict.direction is not None:
        sidecar = args.direction_out or (str(args.problem) + ".direction.json")
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "direction": [float(v) for v in verdict.direction],
                    "curvature": verdict.curvature,
                    "step": verdict.step,
                },
                fh,
            )
            fh.write("\n")
        print(f"direction written to {sidecar}")
    if verdict.status is Status.HOLDS:
        return 0
    if verdict.status is Status.FAILS:
        return 1
    return 2


def cmd_bench(args) -> int:
    methods = _method_list(args.methods)
    records = _bench.run_campaign(
        args.n_list,
        args.trials_per_n,
        conditioning=args.conditioning,
        methods=methods,
        base_seed=args.seed,
        options=_options_from_args(args),
    )
    _bench.write_csv(records, args.out)
    print(_bench.summarize(records))
    print(f"{len(records)} records written to {args.out}")
    return 0


def cmd_thomson(args) -> int:
    methods = _method_list(args.methods)
    rows = []
    for k in args.k_list:
        try:
            point = solve_thomson(k, seed=args.seed, tol_fonc=args.tol_fonc)
        except MaxIterationsError as exc:
            print(f"K={k}: solver failed: {exc}", file=sys.stderr)
            rows.append([k, 3 * k, k + 3, "", "solver_failed", "", "", "", "", ""])
            continue
        inst = _problems.ThomsonInstance(k, "frame_fixed")
        tprob = _problems.ThomsonProblem(inst)
        energy = tprob.objective(point.x)
        problem = tprob.as_problem(point.x, point.lam, fd_sigma=args.fd_sigma)
        if args.save_problems:
            # dense snapshot with the analytic Hessian so any method can be
            # replayed through `check`
            snapshot = _problems.Problem(
                jacobian=problem.jacobian,
                hessian=tprob.lagrangian_hessian(point.x, point.lam),
                x=point.x,
                lam=point.lam,
                provenance=problem.provenance,
            )
            dest = f"{args.save_problems}thomson_k{k}.json"
            _problems.save_problem(snapshot, dest)
            print(f"K={k}: problem written to {dest}")
        print(f"K={k}: energy {energy:.12g}, stationarity residual "
              f"{point.fonc_residual:.3g}")
        times = {}
        for method in methods:
            verdict = verify(problem, method, _options_from_args(args))
            diag = verdict.diagnostics
            times[method] = diag["wall_time_s"]
            print(f"  {method:>16}: {verdict.status.value:6} "
                  f"products={diag.get('operator_products', 0):4d} "
                  f"time={diag['wall_time_s']:.4g}s")
            rows.append([
                k, 3 * k, k + 3, method, verdict.status.value,
                format(energy, ".17g"),
                format(point.fonc_residual, ".17g"),
                format(diag["wall_time_s"], ".17g"),
                diag.get("operator_products", 0),
                diag.get("continuations", 0),
            ])
        if "inertia" in times and times["inertia"] > 0:
            for method in methods:
                if method != "inertia":
                    rel = times[method] / times["inertia"]
                    print(f"  time({method}) / time(inertia) = {rel:.2f}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "K", "N", "M", "method", "verdict", "energy",
                "fonc_residual", "wall_time_s", "operator_products",
                "continuations",
            ])
            writer.writerows(rows)
        print(f"rows written to {args.out}")
    return 0


def cmd_compare(args) -> int:
    try:
        problem = _problems.load_problem(args.problem)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    options = _options_from_args(args)
    print(f"N={problem.n} M={problem.m} L={problem.l}")
    results = {}
    for method in METHODS:
        verdict = verify(problem, method, options)
        results[method] = verdict
        step = "" if verdict.step is None else f" at step {verdict.step}"
        reason = "" if verdict.reason is None else f" ({verdict.reason})"
        print(f"  {method:>16}: {verdict.status.value}{step}{reason}")

    if problem.hessian is not None and problem.n <= 500:
        from .linalg import null_space_basis

        basis = null_space_basis(problem.jacobian, "svd", tol_rank=0.0)
        reduced = basis.matrix.T @ problem.hessian @ basis.matrix
        lam_min = float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T))[0])
        print(f"  {'eigen-oracle':>16}: "
              f"{'holds' if lam_min > 0 else 'fails'} "
              f"(min reduced eigenvalue {lam_min:.6g})")
        K = _problems.build_kkt(problem.hessian, problem.jacobian)
        eigs = np.abs(np.linalg.eigvalsh(K))
        if eigs.min() <= 1e-8 * max(eigs.max(), 1e-300):
            print("  warning: near-singular KKT matrix "
                  f"(min |eigenvalue| {eigs.min():.3g}); "
                  "disagreement between methods is expected here")

    statuses = {v.status for v in results.values()}
    print("agreement: " + ("yes" if len(statuses) == 1 else "no"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvcheck",
        description="Verify or reject constrained second-order sufficiency "
                    "at first-order points.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="verify one problem file")
    p_check.add_argument("problem")
    p_check.add_argument("--method", default="cholesky")
    p_check.add_argument("--direction-out", default=None)
    _add_tolerance_args(p_check)
    p_check.set_defaults(func=cmd_check)

    p_bench = sub.add_parser("bench", help="randomized accuracy/timing campaign")
    p_bench.add_argument("--n-list", type=_int_list, required=True)
    p_bench.add_argument("--trials-per-n", type=int, default=50)
    p_bench.add_argument("--conditioning", choices=["well", "ill"], default="well")
    p_bench.add_argument("--methods", default=",".join(METHODS))
    p_bench.add_argument("--out", required=True)
    _add_tolerance_args(p_bench)
    p_bench.set_defaults(func=cmd_bench, tol_rank=0.0)

    p_th = sub.add_parser("thomson", help="solve and verify sphere problems")
    p_th.add_argument("--k-list", type=_int_list, required=True)
    p_th.add_argument("--methods", default="cholesky,diagonalization,inertia")
    p_th.add_argument("--tol-fonc", type=float, default=1e-9)
    p_th.add_argument("--out", default=None)
    p_th.add_argument("--save-problems", default=None, metavar="PREFIX",
                      help="write each solved instance as problem JSON "
                           "(point and multipliers filled)")
    _add_tolerance_args(p_th)
    p_th.set_defaults(func=cmd_thomson)

    p_cmp = sub.add_parser("compare", help="run all methods on one problem")
    p_cmp.add_argument("problem")
    _add_tolerance_args(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    code = args.func(args)
    if args.command != "check":
        print(f"total time: {time.perf_counter() - t0:.3g}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
