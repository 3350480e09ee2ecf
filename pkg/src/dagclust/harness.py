"""Experiment harness: row-wise k-fold CV, hyperparameter grid search,
repetition loops with aggregate reporting, and dataset/result file formats.
"""

import csv
import json
import time
from dataclasses import dataclass, replace, asdict
from itertools import product
from pathlib import Path

import numpy as np

from .sem import SubjectData
from .datagen import ScenarioSpec, Scenario, generate_scenario
from .dc_admm import Hyperparams, dc_admm_fit
from .single_dag import SingleFitOptions, fit_single_dag, run_baseline
from .clustering import cluster_fit, consensus_matrices
from .metrics import (ari, homogeneity_completeness, skeleton_of, directed_edges,
                      edge_metrics, validation_recon_error)

BASELINE_KINDS = ("population", "individual", "oracle")


@dataclass
class GridSpec:
    lambda1_values: tuple
    lambda2_values: tuple
    tau_values: tuple
    folds: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (self.lambda1_values and self.lambda2_values and self.tau_values):
            raise ValueError("grid value lists must be nonempty")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")

    def cells(self):
        return list(product(self.lambda1_values, self.lambda2_values, self.tau_values))


# grid used in the reference experiments
FULL_GRID = GridSpec(
    lambda1_values=(1e-4, 1e-3, 1e-2, 1e-1),
    lambda2_values=(1e-5, 1e-4, 1e-3, 1e-2),
    tau_values=(0.05, 0.1, 0.4, 0.7),
)


@dataclass
class RunReport:
    records: list
    aggregate: dict
    spec: ScenarioSpec
    grid: GridSpec
    reps: int
    delta: float


def rowwise_kfold(scenario, k, seed):
    """Split each subject's rows into k contiguous blocks of a seeded shuffle;
    returns k (train, val) Scenario pairs covering every row exactly once."""
    rng = np.random.default_rng(seed)
    perms = []
    for s in scenario.subjects:
        if s.m < k:
            raise ValueError(f"subject {s.id} has m={s.m} < k={k}")
        perms.append(rng.permutation(s.m))
    folds = []
    for f in range(k):
        train_subjects, val_subjects = [], []
        for s, perm in zip(scenario.subjects, perms):
            sizes = [s.m // k + (1 if r < s.m % k else 0) for r in range(k)]
            starts = np.cumsum([0] + sizes)
            val_rows = np.sort(perm[starts[f]:starts[f + 1]])
            train_rows = np.sort(np.setdiff1d(perm, val_rows))
            train_subjects.append(SubjectData(s.id, s.X[train_rows]))
            val_subjects.append(SubjectData(s.id, s.X[val_rows]))
        folds.append((
            Scenario(train_subjects, scenario.true_labels, scenario.true_dags, scenario.spec),
            Scenario(val_subjects, scenario.true_labels, scenario.true_dags, scenario.spec),
        ))
    return folds


def _default_fit(subjects, hypers):
    state, _ = dc_admm_fit(subjects, hypers)
    return state


def grid_search(scenario, grid, hypers_base, delta=0.02, fit_fn=None, verbose=False):
    """Evaluate every (lambda1, lambda2, tau) cell by mean validation
    reconstruction error over the folds; returns (best_hypers, cv_table).

    Ties are broken toward larger lambda2, then larger lambda1, then smaller
    tau.  Failed cells are excluded; if all cells fail an error is raised.
    """
    if fit_fn is None:
        fit_fn = _default_fit
    folds = rowwise_kfold(scenario, grid.folds, grid.seed)
    table = []
    for l1, l2, t in grid.cells():
        hyp = replace(hypers_base, lambda1=l1, lambda2=l2, tau=t)
        row = {"lambda1": l1, "lambda2": l2, "tau": t}
        try:
            losses = []
            for train, val in folds:
                state = fit_fn(train.subjects, hyp)
                result = cluster_fit(state, t, delta)
                losses.append(validation_recon_error(
                    val.subjects, result.labels, result.consensus))
            row.update(loss=float(np.mean(losses)), ok=True)
        except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as e:
            row.update(loss=np.nan, ok=False, error=str(e))
        if verbose:
            print(f"  cell l1={l1:g} l2={l2:g} tau={t:g}: "
                  f"{row.get('loss', np.nan):.6g}" + ("" if row["ok"] else " (failed)"))
        table.append(row)
    ok_rows = [r for r in table if r["ok"]]
    if not ok_rows:
        raise RuntimeError("every grid cell failed")
    best = min(ok_rows, key=lambda r: (r["loss"], -r["lambda2"], -r["lambda1"], r["tau"]))
    best_hypers = replace(hypers_base, lambda1=best["lambda1"],
                          lambda2=best["lambda2"], tau=best["tau"])
    return best_hypers, table


def _recon_truth(folds, scenario):
    """Mean held-out reconstruction error using true labels and true DAGs."""
    losses = [validation_recon_error(val.subjects, scenario.true_labels, scenario.true_dags)
              for _, val in folds]
    return float(np.mean(losses))


def _structure_rows(est_per_subject, scenario, delta):
    """Macro-averaged directed and skeleton recovery metrics over subjects."""
    dag_vals, skel_vals = [], []
    for i, est in enumerate(est_per_subject):
        truth = scenario.true_dags[scenario.true_labels[i]]
        dm = edge_metrics(directed_edges(est, delta), directed_edges(truth, delta), directed=True)
        sm = edge_metrics(skeleton_of(est, delta), skeleton_of(truth, delta), directed=False)
        dag_vals.append((dm.tpr, dm.fdr, dm.tnr))
        skel_vals.append((sm.tpr, sm.fdr, sm.tnr))
    dag = np.mean(dag_vals, axis=0)
    skel = np.mean(skel_vals, axis=0)
    return ({"tpr": float(dag[0]), "fdr": float(dag[1]), "tnr": float(dag[2])},
            {"tpr": float(skel[0]), "fdr": float(skel[1]), "tnr": float(skel[2])})


def _baseline_lambda1(kind, scenario, grid, opts):
    """Pick lambda1 for a baseline by k-fold validation loss of its own fits.

    population: pooled fit scored on all subjects; individual: per-subject
    selection; oracle: per-true-cluster selection.  With a single-value grid
    the choice is forced and no fitting happens here.
    """
    lams = list(grid.lambda1_values)
    if len(lams) == 1:
        if kind == "population":
            return lams[0]
        if kind == "individual":
            return [lams[0]] * len(scenario.subjects)
        return {int(r): lams[0] for r in np.unique(np.asarray(scenario.true_labels))}
    folds = rowwise_kfold(scenario, grid.folds, grid.seed)

    def unit_loss(train_subjects, val_subjects, lam):
        W, _ = fit_single_dag(train_subjects, replace(opts, lambda1=lam))
        return validation_recon_error(val_subjects, [0] * len(val_subjects), [W])

    if kind == "population":
        scores = [np.mean([unit_loss(tr.subjects, va.subjects, lam) for tr, va in folds])
                  for lam in lams]
        return lams[int(np.argmin(scores))]
    if kind == "individual":
        out = []
        for i in range(len(scenario.subjects)):
            scores = [np.mean([unit_loss([tr.subjects[i]], [va.subjects[i]], lam)
                               for tr, va in folds]) for lam in lams]
            out.append(lams[int(np.argmin(scores))])
        return out
    if kind == "oracle":
        labels = np.asarray(scenario.true_labels)
        out = {}
        for r in np.unique(labels):
            idx = np.flatnonzero(labels == r)
            scores = [np.mean([unit_loss([tr.subjects[i] for i in idx],
                                         [va.subjects[i] for i in idx], lam)
                               for tr, va in folds]) for lam in lams]
            out[int(r)] = lams[int(np.argmin(scores))]
        return out
    raise ValueError(kind)


def _fit_baseline(kind, scenario, grid, opts):
    lam = _baseline_lambda1(kind, scenario, grid, opts)
    if kind == "population":
        return run_baseline(kind, scenario, replace(opts, lambda1=lam))
    if kind == "individual":
        return [fit_single_dag([s], replace(opts, lambda1=l))[0]
                for s, l in zip(scenario.subjects, lam)]
    labels = np.asarray(scenario.true_labels)
    fits = {}
    for r in np.unique(labels):
        members = [s for s, l in zip(scenario.subjects, labels) if l == r]
        fits[int(r)] = fit_single_dag(members, replace(opts, lambda1=lam[int(r)]))[0]
    return [fits[int(l)].copy() for l in labels]


def run_experiment(spec, grid, reps, methods=("dcadmm",) + BASELINE_KINDS,
                   hypers_base=None, baseline_opts=None, delta=0.02, verbose=False):
    """Repeat the full pipeline: generate data, CV-select hyperparameters,
    refit on all rows, cluster, and score against the generating truth."""
    if hypers_base is None:
        hypers_base = Hyperparams(lambda1=0.01, lambda2=1e-3, tau=0.4)
    if baseline_opts is None:
        baseline_opts = SingleFitOptions()
    records = []
    for r in range(reps):
        t0 = time.time()
        scen = generate_scenario(replace(spec, seed=spec.seed + r))
        rep_grid = replace(grid, seed=grid.seed + r)
        best, cv_table = grid_search(scen, rep_grid, hypers_base, delta=delta,
                                     verbose=verbose)
        folds = rowwise_kfold(scen, rep_grid.folds, rep_grid.seed)
        best_row = min((row for row in cv_table if row["ok"] and
                        (row["lambda1"], row["lambda2"], row["tau"]) ==
                        (best.lambda1, best.lambda2, best.tau)),
                       key=lambda row: row["loss"])
        record = {
            "rep": r, "seed": spec.seed + r,
            "chosen": {"lambda1": best.lambda1, "lambda2": best.lambda2, "tau": best.tau},
            "recon_est": best_row["loss"],
            "recon_truth": _recon_truth(folds, scen),
            "R_truth": len(scen.true_dags),
            "methods": {},
        }
        if "dcadmm" in methods:
            state, trace = dc_admm_fit(scen.subjects, best)
            result = cluster_fit(state, best.tau, delta)
            truth_labels = np.asarray(scen.true_labels)
            h, c = homogeneity_completeness(truth_labels, result.labels)
            dag, skel = _structure_rows(
                [result.consensus[l] for l in result.labels], scen, delta)
            record.update(
                ari=ari(truth_labels, result.labels), homogeneity=h, completeness=c,
                R_est=result.n_clusters, fit_status=state.status,
            )
            record["methods"]["dcadmm"] = {"dag": dag, "skeleton": skel}
        for kind in methods:
            if kind == "dcadmm":
                continue
            west = _fit_baseline(kind, scen, rep_grid, baseline_opts)
            dag, skel = _structure_rows(west, scen, delta)
            record["methods"][kind] = {"dag": dag, "skeleton": skel}
        record["wall_time"] = time.time() - t0
        if verbose:
            print(f"rep {r}: ari={record.get('ari', float('nan')):.3f} "
                  f"recon_est={record['recon_est']:.4f} "
                  f"({record['wall_time']:.1f}s)")
        records.append(record)
    return RunReport(records=records, aggregate=_aggregate(records), spec=spec,
                     grid=grid, reps=reps, delta=delta)


def _mean_ci(values):
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    ci = float(1.96 * np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return {"mean": mean, "ci": ci}


def _aggregate(records):
    agg = {}
    for key in ("ari", "homogeneity", "completeness", "recon_truth", "recon_est", "R_est"):
        vals = [rec[key] for rec in records if key in rec]
        if vals:
            agg[key] = _mean_ci(vals)
    methods = sorted({m for rec in records for m in rec["methods"]})
    agg["methods"] = {}
    for m in methods:
        agg["methods"][m] = {}
        for kind in ("dag", "skeleton"):
            agg["methods"][m][kind] = {
                stat: _mean_ci([rec["methods"][m][kind][stat] for rec in records
                                if m in rec["methods"]])
                for stat in ("tpr", "fdr", "tnr")
            }
    return agg


def delta_sweep(scenario, W_list, labels, deltas):
    """Re-evaluate structure recovery of per-subject estimates across
    hard-threshold levels, holding the cluster assignment fixed."""
    rows = []
    for delta in deltas:
        consensus = consensus_matrices(labels, W_list, delta)
        dag, skel = _structure_rows([consensus[l] for l in labels], scenario, delta)
        rows.append({"delta": float(delta), "dag": dag, "skeleton": skel})
    return rows


# ---------------------------------------------------------------------------
# file formats

def save_scenario(scenario, outdir):
    """Write manifest.json, one subject_<i>.csv per subject, and dag_<r>.csv
    per cluster (round-trippable decimal text)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = scenario.spec
    manifest = {
        "n": len(scenario.subjects),
        "d": scenario.subjects[0].d,
        "m": [s.m for s in scenario.subjects],
        "true_labels": None if scenario.true_labels is None
        else [int(l) for l in scenario.true_labels],
        "n_clusters": None if scenario.true_dags is None else len(scenario.true_dags),
        "seed": None if spec is None else spec.seed,
        "generator": None if spec is None else asdict(spec),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    d = scenario.subjects[0].d
    header = ",".join(f"x{j}" for j in range(d))
    for i, s in enumerate(scenario.subjects):
        np.savetxt(outdir / f"subject_{i}.csv", s.X, fmt="%.17g", delimiter=",",
                   header=header, comments="")
    if scenario.true_dags is not None:
        for r, W in enumerate(scenario.true_dags):
            np.savetxt(outdir / f"dag_{r}.csv", W, fmt="%.17g", delimiter=",")


def load_scenario(indir):
    indir = Path(indir)
    manifest = json.loads((indir / "manifest.json").read_text())
    subjects = []
    for i in range(manifest["n"]):
        X = np.loadtxt(indir / f"subject_{i}.csv", delimiter=",", skiprows=1, ndmin=2)
        subjects.append(SubjectData(i, X))
    labels = manifest.get("true_labels")
    labels = None if labels is None else np.asarray(labels)
    dags = None
    if manifest.get("n_clusters"):
        dags = [np.loadtxt(indir / f"dag_{r}.csv", delimiter=",", ndmin=2)
                for r in range(manifest["n_clusters"])]
    spec = None
    gen = manifest.get("generator")
    if gen:
        gen = dict(gen)
        gen["cluster_proportions"] = tuple(gen["cluster_proportions"])
        spec = ScenarioSpec(**gen)
    return Scenario(subjects=subjects, true_labels=labels, true_dags=dags, spec=spec)


def save_fit(outdir, state, result, hypers, trace=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, W in enumerate(state.W):
        np.savetxt(outdir / f"west_{i}.csv", W, fmt="%.17g", delimiter=",")
    np.savetxt(outdir / "theta_norms.csv", result.theta_norms, fmt="%.17g", delimiter=",")
    np.savetxt(outdir / "labels.csv", np.asarray(result.labels, dtype=int)[:, None], fmt="%d")
    for r, M in enumerate(result.consensus):
        np.savetxt(outdir / f"consensus_{r}.csv", M, fmt="%.17g", delimiter=",")
    info = {
        "hypers": asdict(hypers),
        "status": state.status,
        "rho1_current": state.rho1_current,
        "alpha": [float(a) for a in state.alpha],
        "n_clusters": result.n_clusters,
        "delta": result.delta,
    }
    if trace is not None:
        info["outer_trace"] = [
            {k: v for k, v in row.items() if k != "indicator"}
            for row in trace["outer"]]
    (outdir / "fitinfo.json").write_text(json.dumps(info, indent=2))


def load_fit(indir):
    indir = Path(indir)
    info = json.loads((indir / "fitinfo.json").read_text())
    labels = np.loadtxt(indir / "labels.csv", dtype=int, ndmin=1)
    n = labels.size
    W = [np.loadtxt(indir / f"west_{i}.csv", delimiter=",", ndmin=2) for i in range(n)]
    consensus = [np.loadtxt(indir / f"consensus_{r}.csv", delimiter=",", ndmin=2)
                 for r in range(info["n_clusters"])]
    theta_norms = np.loadtxt(indir / "theta_norms.csv", delimiter=",", ndmin=2)
    return {"W": W, "labels": labels, "consensus": consensus,
            "theta_norms": theta_norms, "info": info}


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def report_to_dict(report):
    # wall_time stays in-memory only so identical seeds give identical files
    return {
        "spec": asdict(report.spec),
        "grid": asdict(report.grid),
        "reps": report.reps,
        "delta": report.delta,
        "records": [{k: v for k, v in rec.items() if k != "wall_time"}
                    for rec in report.records],
        "aggregate": report.aggregate,
    }


def save_report(report, outdir):
    """Write report.json plus tables/*.csv (per-rep and aggregated rows)."""
    outdir = Path(outdir)
    (outdir / "tables").mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(
        json.dumps(report_to_dict(report), indent=2, default=_jsonable))
    with open(outdir / "tables" / "clustering.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep", "ari", "homogeneity", "completeness",
                    "recon_truth", "recon_est", "R_truth", "R_est"])
        for rec in report.records:
            w.writerow([rec["rep"], rec.get("ari"), rec.get("homogeneity"),
                        rec.get("completeness"), rec["recon_truth"],
                        rec["recon_est"], rec["R_truth"], rec.get("R_est")])
    with open(outdir / "tables" / "structure.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep", "method", "skel_tpr", "skel_fdr", "skel_tnr",
                    "dag_tpr", "dag_fdr", "dag_tnr"])
        for rec in report.records:
            for m, vals in rec["methods"].items():
                w.writerow([rec["rep"], m,
                            vals["skeleton"]["tpr"], vals["skeleton"]["fdr"],
                            vals["skeleton"]["tnr"], vals["dag"]["tpr"],
                            vals["dag"]["fdr"], vals["dag"]["tnr"]])
    with open(outdir / "tables" / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "mean", "ci95"])
        for key, val in report.aggregate.items():
            if key == "methods":
                continue
            w.writerow([key, val["mean"], val["ci"]])
        for m, kinds in report.aggregate["methods"].items():
            for kind, stats in kinds.items():
                for stat, val in stats.items():
                    w.writerow([f"{m}.{kind}.{stat}", val["mean"], val["ci"]])
