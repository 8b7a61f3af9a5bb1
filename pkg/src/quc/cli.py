"""Command-line front end: validate configs, analyze integrands, solve
Dirichlet problems, tabulate gauges, verify estimates, iterate De Giorgi.

Every artifact is a CSV with one provenance comment line (config hash,
package version, kernel backend, seed); no timestamps, so identical configs
give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, _kernels
from . import dual_geometry as dg
from . import estimates as est
from . import qc_analysis as qa
from .config import ConfigError, parse_config
from .csvio import write_csv
from .integrand import (check_gradient_finite_differences, check_hessian_symmetry,
                        check_midpoint_convexity, isotropic_envelope, normalise)
from .solver import GridProblem, SolverError, solve, stress_field

SOLUTION_FIELDS = ["x", "y", "u", "du1", "du2", "v1", "v2",
                   "dv11", "dv12", "dv21", "dv22"]


def _provenance(cfg, seed):
    return (f"quc-version={__version__} config-sha256={cfg.sha256()} "
            f"kernels={_kernels.backend()} seed={seed}")


def _make_problem(cfg, F, n=None):
    spec = cfg.problem_spec
    domain = spec.get("domain", [[0.0, 1.0], [0.0, 1.0]])
    mask = spec.get("mask")
    return GridProblem(
        integrand=F,
        n=int(n or spec["n"]),
        boundary=cfg.boundary,
        bounds=tuple(tuple(map(float, ax)) for ax in domain),
        mask=(np.asarray(mask["center"], dtype=float), float(mask["radius"]))
        if mask else None,
        descriptor=F.describe(),
    )


def _solve(cfg, F, n=None):
    kw = {}
    s = cfg.solver
    if "method" in s:
        kw["method"] = s["method"]
    if "tol_rel" in s:
        kw["tol_rel"] = float(s["tol_rel"])
    if "max_iter" in s:
        kw["max_iter"] = int(s["max_iter"])
    if "gd_max_iter" in s:
        kw["gd_max_iter"] = int(s["gd_max_iter"])
    return solve(_make_problem(cfg, F, n), **kw)


def _solution_rows(sol):
    st = stress_field(sol)
    mesh = sol.mesh
    u_bary = sol.u[mesh.tris].mean(axis=1)
    rows = []
    for t in range(mesh.n_tris):
        rows.append([mesh.bary[t, 0], mesh.bary[t, 1], u_bary[t],
                     sol.du[t, 0], sol.du[t, 1], st.v[t, 0], st.v[t, 1],
                     st.dv_tri[t, 0, 0], st.dv_tri[t, 0, 1],
                     st.dv_tri[t, 1, 0], st.dv_tri[t, 1, 1]])
    return rows


# ---------------------------------------------------------------------------
# analyze rows
# ---------------------------------------------------------------------------

def analyze_rows(F, rng):
    """CSV rows (check, measured, bound, margin) for one integrand."""
    rows = []

    def add(check, measured, bound=None):
        margin = None if bound is None else bound - measured
        rows.append({"check": check, "measured": measured, "bound": bound,
                     "margin": margin})

    hrep = qa.estimate_H(F, rng=rng)
    if F.analytic_H is not None:
        add("H_est_vs_analytic", hrep.H_est, 1.02 * F.analytic_H)
    else:
        add("H_est", hrep.H_est)
    prof = qa.eta_H(max(hrep.H_est, 1.0))
    s = np.exp(rng.uniform(np.log(1e-6), np.log(1e6), 2000))
    t = np.exp(rng.uniform(np.log(1e-6), np.log(1e6), 2000))
    idrep = qa.eta_identities_check(prof, s, t)
    add("eta_identities_worst", max(idrep.max_violation.values()), 1e-12)

    hs = np.geomspace(1.0, 1e6, 50)
    rt = np.max(np.abs(qa.H_from_delta(qa.delta_from_H(hs)) / hs - 1.0))
    add("delta_H_roundtrip", float(rt), 1e-12)

    drep = qa.measure_delta_monotonicity(F, rng=rng, H_est=hrep.H_est)
    add("delta_monotonicity", -drep.delta_est,
        -(qa.delta_from_H(hrep.H_est) - 1e-6))

    qrep = qa.quasisymmetry_check(F, rng=rng, H=hrep.H_est)
    add("quasisymmetry_C", qrep.C)

    env = isotropic_envelope(F)
    erep = env.check_envelope(F, rng)
    add("envelope_C", erep["C"])
    add("envelope_doubling_C", env.check_doubling(hrep.H_est))

    add("midpoint_convexity_margin", -check_midpoint_convexity(F, rng, n=2000), 1e-12)
    add("gradient_fd_mismatch", check_gradient_finite_differences(F, rng, n=500), 1e-5)
    return rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(cfg, args, out_dir, rng):
    F = cfg.integrand
    checks = [
        ("midpoint_convexity", check_midpoint_convexity(F, rng, n=5000) >= -1e-12),
        ("gradient_matches_fd", check_gradient_finite_differences(F, rng, n=500) <= 1e-5),
        ("hessian_symmetry", check_hessian_symmetry(F, rng, n=500) <= 1e-4),
        ("value_at_origin_finite", np.isfinite(F.eval(np.zeros(2)))),
    ]
    ok = True
    for name, passed in checks:
        print(f"validate {name}: {'PASS' if passed else 'FAIL'}")
        ok &= bool(passed)
    print(f"validate integrand={F.describe()}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_analyze(cfg, args, out_dir, rng):
    F = normalise(cfg.integrand)
    rows = analyze_rows(F, rng)
    path = os.path.join(out_dir, "analyze.csv")
    write_csv(path, ["check", "measured", "bound", "margin"], rows,
              _provenance(cfg, args.seed))
    bad = 0
    for r in rows:
        verdict = ""
        if r["margin"] is not None:
            verdict = "PASS" if r["margin"] >= 0 else "FAIL"
            bad += verdict == "FAIL"
        print(f"analyze {r['check']}: measured={r['measured']:.6g} {verdict}")
    print(f"analyze: wrote {path}")
    return 0 if bad == 0 else 1


def cmd_solve(cfg, args, out_dir, rng):
    F = normalise(cfg.integrand)
    sol = _solve(cfg, F, n=args.n)
    path = args.out or os.path.join(out_dir, "solution.csv")
    write_csv(path, SOLUTION_FIELDS, _solution_rows(sol), _provenance(cfg, args.seed))
    print(f"solve n={sol.problem.n} energy={sol.energy:.12g} residual={sol.residual:.3g} "
          f"iterations={sol.iterations} converged={sol.converged}")
    print(f"solve: wrote {path}")
    if not sol.converged:
        print("solve: solver non-converged", file=sys.stderr)
        return 1
    return 0


def cmd_gauge(cfg, args, out_dir, rng):
    F = normalise(cfg.integrand)
    levels = [float(k) for k in args.k.split(",")]
    H = qa.estimate_H(F, rng=rng).H_est
    table_rows, check_rows = [], []
    ok = True
    for k in levels:
        gs = dg.gauge_bounds(F, k, n_angles=args.angles, H=H)
        for th, val in zip(gs.angles, gs.values):
            table_rows.append([k, th, val])
        check_rows.append({
            "k": k, "sup": gs.sup, "inf": gs.inf, "lipschitz": gs.lipschitz,
            "lip_bound": gs.checks.get("lipschitz_bound"),
            "sup_inf_ratio": gs.checks.get("sup_inf_ratio"), "H": H,
        })
        lip_ok = gs.checks.get("lipschitz_ok", True)
        ok &= lip_ok
        print(f"gauge k={k:g}: sup={gs.sup:.6g} inf={gs.inf:.6g} "
              f"lip={gs.lipschitz:.6g} {'PASS' if lip_ok else 'FAIL'}")
    prov = _provenance(cfg, args.seed)
    write_csv(os.path.join(out_dir, "gauge_table.csv"), ["k", "angle", "g"],
              table_rows, prov)
    write_csv(os.path.join(out_dir, "gauge_checks.csv"),
              ["k", "sup", "inf", "lipschitz", "lip_bound", "sup_inf_ratio", "H"],
              check_rows, prov)
    print(f"gauge: wrote {out_dir}/gauge_table.csv, {out_dir}/gauge_checks.csv")
    return 0 if ok else 1


def _run_one_check(spec, sol, H):
    name = spec["name"]
    center = tuple(map(float, spec.get("center", (0.0, 0.0))))
    if name == "caccioppoli":
        if "ell" in spec:
            ell = (float(spec["ell"]["c"]), np.asarray(spec["ell"]["b"], dtype=float))
        else:
            ell = (float(spec["k"]), np.zeros(2))
        rep = est.caccioppoli_check(sol, ell, float(spec["rho"]), float(spec["R"]),
                                    center, H=H)
        return [rep]
    if name == "caccioppoli_l1":
        return [est.caccioppoli_l1_check(sol, float(spec["R"]), center, H=H)]
    if name == "sobolev":
        return est.sobolev_stress_check(sol, float(spec["R"]), center, H=H)
    if name == "lipschitz":
        return [est.lipschitz_check(sol, float(spec["R"]), center)]
    res = est.degiorgi_iterate(float(spec["X0"]), float(spec["C"]), float(spec["b"]),
                               float(spec["R"]), int(spec["N"]))
    rep = res.to_report()
    rep.extra["expected"] = spec.get("expect")
    rep._degiorgi = res
    return [rep]


def run(cfg, out_dir=".", seed=None, checks=None):
    """Pipeline: normalise, analyze, solve, run checks; write one CSV each.

    Returns (exit_code, report list).  Exit is nonzero on the first failed
    hard assertion (non-convergence, assert_max_ratio violations, degiorgi
    verdict mismatches).
    """
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    prov = _provenance(cfg, seed)
    os.makedirs(out_dir, exist_ok=True)
    failures = []

    F = normalise(cfg.integrand)
    rows = analyze_rows(F, rng)
    write_csv(os.path.join(out_dir, "analyze.csv"),
              ["check", "measured", "bound", "margin"], rows, prov)
    for r in rows:
        if r["margin"] is not None and r["margin"] < 0:
            failures.append(f"analyze:{r['check']}")

    check_specs = cfg.checks if checks is None else checks
    needs_solve = any(c["name"] != "degiorgi" for c in check_specs)
    sol = None
    if needs_solve:
        sol = _solve(cfg, F)
        write_csv(os.path.join(out_dir, "solution.csv"), SOLUTION_FIELDS,
                  _solution_rows(sol), prov)
        print(f"solve: energy={sol.energy:.12g} residual={sol.residual:.3g} "
              f"converged={sol.converged}")
        if not sol.converged:
            failures.append("solver non-converged")

    H = qa.estimate_H(F, rng=np.random.default_rng(seed + 1)).H_est if needs_solve else None
    reports = []
    for i, spec in enumerate(check_specs):
        reps = _run_one_check(spec, sol, H)
        reports.extend(reps)
        out = spec.get("out", f"{spec['name']}_{i}.csv")
        write_csv(os.path.join(out_dir, out), est.REPORT_FIELDS,
                  [r.to_row() for r in reps], prov)
        for rep in reps:
            line = f"check {rep.name}: lhs={rep.lhs:.6g} rhs={rep.rhs:.6g} ratio={rep.ratio:.6g}"
            if "assert_max_ratio" in spec:
                bound = float(spec["assert_max_ratio"])
                passed = rep.ratio <= bound
                line += f" [ratio <= {bound:g}: {'PASS' if passed else 'FAIL'}]"
                if not passed:
                    failures.append(f"{rep.name}: ratio {rep.ratio:g} > {bound:g}")
            if rep.name == "degiorgi" and spec.get("expect"):
                verdict = rep.extra["verdict"]
                passed = verdict == spec["expect"]
                line += f" verdict={verdict} [{'PASS' if passed else 'FAIL'}]"
                if not passed:
                    failures.append(f"degiorgi verdict {verdict} != {spec['expect']}")
            print(line)

    if failures:
        print(f"run: FAILED ({failures[0]})", file=sys.stderr)
        return 1, reports
    return 0, reports


def cmd_verify(cfg, args, out_dir, rng):
    checks = cfg.checks
    if args.check:
        spec = {"name": args.check}
        if args.R is not None:
            spec["R"] = args.R
        if args.rho is not None:
            spec["rho"] = args.rho
        if args.k is not None:
            spec["k"] = args.k
        if args.ell is not None:
            c, b1, b2 = (float(v) for v in args.ell.split(","))
            spec["ell"] = {"c": c, "b": [b1, b2]}
        if args.center is not None:
            spec["center"] = [float(v) for v in args.center.split(",")]
        if args.out:
            spec["out"] = args.out
        checks = [spec]
    code, _ = run(cfg, out_dir=out_dir, seed=args.seed, checks=checks)
    return code


def cmd_degiorgi(args, out_dir):
    res = est.degiorgi_iterate(args.X0, args.C, args.b, args.R, args.N,
                               max_steps=args.steps)
    print(f"degiorgi threshold={res.threshold:.17g} X0={res.X0:.17g} "
          f"verdict={res.verdict} steps={res.steps}")
    if args.out:
        rows = [[n, x] for n, x in enumerate(res.sequence)]
        write_csv(args.out, ["step", "X"], rows,
                  f"quc-version={__version__} degiorgi X0={res.X0:.17g} "
                  f"C={args.C:.17g} b={args.b:.17g} R={args.R:.17g} N={args.N} "
                  f"threshold={res.threshold:.17g} verdict={res.verdict}")
        print(f"degiorgi: wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(prog="quc", description=__doc__)
    ap.add_argument("--out-dir", default=None, help="output directory (default: config)")
    ap.add_argument("--seed", type=int, default=None, help="override config seed")
    ap.add_argument("--reproducible", action="store_true",
                    help="force sequential deterministic evaluation")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("validate", "analyze"):
        p = sub.add_parser(name)
        p.add_argument("config")

    p = sub.add_parser("solve")
    p.add_argument("config")
    p.add_argument("--n", type=int, default=None, help="override grid nodes per side")
    p.add_argument("--out", default=None, help="solution CSV path")

    p = sub.add_parser("gauge")
    p.add_argument("config")
    p.add_argument("--k", required=True, help="comma-separated gauge levels")
    p.add_argument("--angles", type=int, default=256)

    p = sub.add_parser("verify")
    p.add_argument("config")
    p.add_argument("--check", default=None,
                   choices=["caccioppoli", "caccioppoli_l1", "sobolev",
                            "lipschitz", "degiorgi"])
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--ell", default=None, help="affine level c,b1,b2")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--R", type=float, default=None)
    p.add_argument("--center", default=None, help="ball center x,y")
    p.add_argument("--out", default=None, help="report CSV name")

    p = sub.add_parser("degiorgi")
    p.add_argument("--X0", type=float, required=True)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--steps", type=int, default=10**4)
    p.add_argument("--out", default=None)
    return ap


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "degiorgi":
        return cmd_degiorgi(args, args.out_dir or ".")
    try:
        cfg = parse_config(args.config)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out_dir = args.out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    seed = cfg.seed if args.seed is None else args.seed
    args.seed = seed
    rng = np.random.default_rng(seed)
    handler = {"validate": cmd_validate, "analyze": cmd_analyze,
               "solve": cmd_solve, "gauge": cmd_gauge, "verify": cmd_verify}
    try:
        return handler[args.command](cfg, args, out_dir, rng)
    except (SolverError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
