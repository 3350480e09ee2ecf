"""Command-line entry point for the experiment pipeline.

Subcommands: generate, fit, baseline, cv, evaluate, bench, sweep-delta.
Exit codes: 0 success, 2 invalid input, 3 numerical failure,
4 non-convergence (results still written).
"""

import argparse
import json
import os
import sys
from pathlib import Path


def _build_parser():
    p = argparse.ArgumentParser(prog="dagclust",
                                description="Joint DAG estimation and clustering experiments")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread cap")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="run the joint fit on a dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--hypers", default=None, help="JSON file of hyperparameters")
    f.add_argument("--out", required=True)
    f.add_argument("--lambda1", type=float, default=None)
    f.add_argument("--lambda2", type=float, default=None)
    f.add_argument("--tau", type=float, default=None)
    f.add_argument("--rho2", type=float, default=None)
    f.add_argument("--rho1-init", type=float, default=None)
    f.add_argument("--upper-triangular", action="store_true")
    f.add_argument("--max-dc-iter", type=int, default=None)
    f.add_argument("--max-admm-iter", type=int, default=None)
    f.add_argument("--delta", type=float, default=0.02)

    b = sub.add_parser("baseline", help="run a reference single-DAG scheme")
    b.add_argument("--kind", required=True, choices=["population", "individual", "oracle"])
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--lambda1", type=float, default=0.01)

    c = sub.add_parser("cv", help="grid search by k-fold validation loss")
    c.add_argument("--data", required=True)
    c.add_argument("--grid", required=True, help="JSON file with lambda1/lambda2/tau lists")
    c.add_argument("--out", required=True)
    c.add_argument("--delta", type=float, default=0.02)

    e = sub.add_parser("evaluate", help="score a fit directory against a dataset")
    e.add_argument("--fit", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.add_argument("--delta", type=float, default=0.02)

    n = sub.add_parser("bench", help="run the repetition experiment")
    n.add_argument("--scenario", required=True, help="JSON scenario (+ optional grid) file")
    n.add_argument("--reps", type=int, default=None)
    n.add_argument("--out", required=True)
    n.add_argument("--full", action="store_true",
                   help="full protocol: 50 reps and the complete hyperparameter grid")

    s = sub.add_parser("sweep-delta", help="threshold sweep over an existing fit")
    s.add_argument("--fit", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--from", dest="lo", type=float, default=0.01)
    s.add_argument("--to", dest="hi", type=float, default=0.10)
    s.add_argument("--step", type=float, default=0.01)
    s.add_argument("--out", default=None)
    return p


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"cannot read JSON config {path}: {e}")


def _scenario_spec(cfg, seed_override):
    from .datagen import ScenarioSpec
    fields = {k: cfg[k] for k in ("n", "m", "d", "edges_per_dag", "sigma", "seed")}
    fields["cluster_proportions"] = tuple(cfg["cluster_proportions"])
    if seed_override is not None:
        fields["seed"] = seed_override
    return ScenarioSpec(**fields)


def _grid_spec(cfg):
    from .harness import GridSpec
    return GridSpec(
        lambda1_values=tuple(cfg["lambda1"]),
        lambda2_values=tuple(cfg["lambda2"]),
        tau_values=tuple(cfg["tau"]),
        folds=int(cfg.get("folds", 3)),
        seed=int(cfg.get("seed", 0)),
    )


def _hypers_from_args(args):
    from .dc_admm import Hyperparams
    base = _load_json(args.hypers) if args.hypers else {}
    hyp = dict(lambda1=0.01, lambda2=1e-3, tau=0.4)
    hyp.update(base)
    overrides = {
        "lambda1": args.lambda1, "lambda2": args.lambda2, "tau": args.tau,
        "rho2": args.rho2, "rho1_init": args.rho1_init,
        "max_dc_iter": args.max_dc_iter, "max_admm_iter": args.max_admm_iter,
    }
    hyp.update({k: v for k, v in overrides.items() if v is not None})
    if args.upper_triangular:
        hyp["upper_triangular_mode"] = True
    return Hyperparams(**hyp)


def _cmd_generate(args):
    from .datagen import generate_scenario
    from .harness import save_scenario
    spec = _scenario_spec(_load_json(args.config), args.seed)
    save_scenario(generate_scenario(spec), args.out)
    if args.verbose:
        print(f"wrote dataset to {args.out}")
    return 0


def _cmd_fit(args):
    from .harness import load_scenario, save_fit
    from .dc_admm import dc_admm_fit
    from .clustering import cluster_fit
    scenario = load_scenario(args.data)
    hypers = _hypers_from_args(args)
    state, trace = dc_admm_fit(scenario.subjects, hypers)
    result = cluster_fit(state, hypers.tau, args.delta)
    save_fit(args.out, state, result, hypers, trace)
    if args.verbose:
        print(f"status={state.status} clusters={result.n_clusters}")
    return 0 if state.status == "converged" else 4


def _cmd_baseline(args):
    import numpy as np
    from .harness import load_scenario
    from .single_dag import SingleFitOptions, run_baseline
    scenario = load_scenario(args.data)
    west = run_baseline(args.kind, scenario, SingleFitOptions(lambda1=args.lambda1))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, W in enumerate(west):
        np.savetxt(out / f"west_{i}.csv", W, fmt="%.17g", delimiter=",")
    if args.kind == "population":
        labels = [0] * len(west)
    elif args.kind == "individual":
        labels = list(range(len(west)))
    else:
        labels = [int(l) for l in scenario.true_labels]
    np.savetxt(out / "labels.csv", np.asarray(labels)[:, None], fmt="%d")
    (out / "fitinfo.json").write_text(json.dumps(
        {"kind": args.kind, "lambda1": args.lambda1}, indent=2))
    return 0


def _cmd_cv(args):
    from .harness import load_scenario, grid_search
    from .dc_admm import Hyperparams
    import csv
    scenario = load_scenario(args.data)
    grid = _grid_spec(_load_json(args.grid))
    if args.seed is not None:
        grid.seed = args.seed
    base = Hyperparams(lambda1=0.01, lambda2=1e-3, tau=0.4)
    best, table = grid_search(scenario, grid, base, delta=args.delta,
                              verbose=args.verbose)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best.json").write_text(json.dumps(
        {"lambda1": best.lambda1, "lambda2": best.lambda2, "tau": best.tau}, indent=2))
    with open(out / "cv_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda1", "lambda2", "tau", "loss", "ok"])
        for row in table:
            w.writerow([row["lambda1"], row["lambda2"], row["tau"],
                        row.get("loss"), row["ok"]])
    return 0


def _cmd_evaluate(args):
    import numpy as np
    from .harness import load_scenario, load_fit, _structure_rows
    from .clustering import consensus_matrices
    from .metrics import ari, homogeneity_completeness, validation_recon_error
    scenario = load_scenario(args.data)
    fit = load_fit(args.fit)
    labels = fit["labels"]
    report = {"delta": args.delta, "n_clusters": int(labels.max() + 1)}
    consensus = consensus_matrices(labels, fit["W"], args.delta)
    report["recon"] = validation_recon_error(scenario.subjects, labels, consensus)
    if scenario.true_labels is not None:
        truth = np.asarray(scenario.true_labels)
        h, c = homogeneity_completeness(truth, labels)
        report.update(ari=ari(truth, labels), homogeneity=h, completeness=c)
        if scenario.true_dags is not None:
            dag, skel = _structure_rows([consensus[l] for l in labels],
                                        scenario, args.delta)
            report.update(dag=dag, skeleton=skel)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def _cmd_bench(args):
    from .harness import run_experiment, save_report, FULL_GRID
    cfg = _load_json(args.scenario)
    spec = _scenario_spec(cfg, args.seed)
    if args.full:
        grid = FULL_GRID
        reps = args.reps or 50
    elif "grid" in cfg:
        grid = _grid_spec(cfg["grid"])
        reps = args.reps or int(cfg.get("reps", 5))
    else:
        raise ValueError("scenario file needs a 'grid' entry (or pass --full)")
    methods = tuple(cfg.get("methods", ("dcadmm", "population", "individual", "oracle")))
    report = run_experiment(spec, grid, reps, methods=methods,
                            delta=float(cfg.get("delta", 0.02)), verbose=args.verbose)
    save_report(report, args.out)
    bad = [rec for rec in report.records
           if rec.get("fit_status") not in (None, "converged")]
    return 4 if bad else 0


def _cmd_sweep(args):
    import numpy as np
    import csv
    from .harness import load_scenario, load_fit, delta_sweep
    scenario = load_scenario(args.data)
    fit = load_fit(args.fit)
    deltas = np.arange(args.lo, args.hi + 1e-12, args.step)
    rows = delta_sweep(scenario, fit["W"], fit["labels"], deltas)
    lines = [["delta", "dag_tpr", "dag_fdr", "dag_tnr",
              "skel_tpr", "skel_fdr", "skel_tnr"]]
    for row in rows:
        lines.append([row["delta"], row["dag"]["tpr"], row["dag"]["fdr"],
                      row["dag"]["tnr"], row["skeleton"]["tpr"],
                      row["skeleton"]["fdr"], row["skeleton"]["tnr"]])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(lines)
    else:
        for line in lines:
            print(",".join(str(x) for x in line))
    return 0


_COMMANDS = {
    "generate": _cmd_generate, "fit": _cmd_fit, "baseline": _cmd_baseline,
    "cv": _cmd_cv, "evaluate": _cmd_evaluate, "bench": _cmd_bench,
    "sweep-delta": _cmd_sweep,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # numpy LinAlgError and friends
        import numpy as np
        if isinstance(e, np.linalg.LinAlgError):
            print(f"numerical failure: {e}", file=sys.stderr)
            return 3
        raise


if __name__ == "__main__":
    sys.exit(main())
