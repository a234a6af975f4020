"""Command-line entry point: ``clickcascade <subcommand> ...``.

Every subcommand that writes files also writes a manifest next to its
output recording the argv, resolved configuration, seeds and SHA-256 of
each artifact. ``clickcascade replay <manifest>`` re-runs it and checks
the checksums.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, bayes_ab, lasso, topics
from .errors import InvalidInputError, RecordError
from .io import (
    ExperimentConfig,
    atomic_write_json,
    atomic_write_text,
    load_packages_csv,
    read_results,
    sha256_file,
    write_manifest,
    write_results,
    write_round_logs,
)
from .sim import run_experiment
from .textfeat import FeatureMatrix, build_matrix, demo_lexicons, load_lexicons, package_id

log = logging.getLogger("clickcascade")

EXIT_INVALID = 2
EXIT_IO = 3
EXIT_MISMATCH = 4


class CliError(Exception):
    def __init__(self, message: str, path: str | os.PathLike | None = None, code: int = EXIT_INVALID):
        super().__init__(message)
        self.path = None if path is None else str(path)
        self.code = code


def _require_file(path: str | os.PathLike, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {p}", p)
    return p


def _manifest_for(output: str | os.PathLike) -> Path:
    p = Path(output)
    return p.with_name(p.name + ".manifest.json")


def _matrix_text(matrix: FeatureMatrix) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["package_id", *matrix.names, "ctr"])
    for rid, row, y in zip(matrix.row_ids, matrix.rows, matrix.outcomes):
        writer.writerow([rid, *(repr(float(v)) for v in row), repr(float(y))])
    return buf.getvalue()


# --- subcommands -------------------------------------------------------------


def cmd_extract(args, argv):
    records = load_packages_csv(_require_file(args.input, "input CSV"))
    if args.lexicons:
        lex_dir = Path(args.lexicons)
        if not lex_dir.is_dir():
            raise CliError(f"lexicon directory not found: {lex_dir}", lex_dir)
        lexicons = load_lexicons(lex_dir)
        if not lexicons:
            raise CliError(f"no *.csv lexicons in {lex_dir}", lex_dir)
    else:
        lexicons = demo_lexicons()
    cols = None
    if args.lda_model:
        model = topics.LdaModel.load(_require_file(args.lda_model, "LDA model"))
        cols = topics.topic_columns(model, records, seed=args.seed)
    matrix = build_matrix(records, lexicons, cols)
    atomic_write_text(args.output, _matrix_text(matrix))
    config = {"input": str(args.input), "lexicons": [lex.name for lex in lexicons],
              "lda_model": args.lda_model, "rows": matrix.shape[0], "columns": matrix.names}
    write_manifest(_manifest_for(args.output), "extract", argv, config,
                   {"features": Path(args.output)}, {"topic_inference_seed": args.seed})
    log.info("wrote %d x %d feature matrix to %s", *matrix.shape, args.output)


def cmd_topics_fit(args, argv):
    records = load_packages_csv(_require_file(args.input, "input CSV"))
    corpus = topics.build_documents(records, min_df=args.min_df)
    if not corpus.documents:
        raise CliError("no documents left after vocabulary pruning", args.input)
    model = topics.fit_lda(corpus.documents, args.k, args.alpha, args.beta, args.iterations, args.seed,
                           vocab=corpus.vocab)
    atomic_write_text(args.output, json.dumps(model.to_json()) + "\n")
    config = {"input": str(args.input), "k": args.k, "alpha": model.alpha, "beta": model.beta,
              "iterations": args.iterations, "min_df": args.min_df, "vocab_size": len(corpus.vocab),
              "documents": len(corpus.documents), "dropped": corpus.dropped}
    write_manifest(_manifest_for(args.output), "topics fit", argv, config,
                   {"model": Path(args.output)}, {"seed": args.seed})


def cmd_topics_apply(args, argv):
    records = load_packages_csv(_require_file(args.input, "input CSV"))
    model = topics.LdaModel.load(_require_file(args.model, "LDA model"))
    cols = topics.topic_columns(model, records, seed=args.seed)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["package_id", *(f"topic_{k}" for k in range(model.n_topics))])
    for i, (rec, row) in enumerate(zip(records, cols)):
        writer.writerow([package_id(rec, i), *(repr(float(v)) for v in row)])
    atomic_write_text(args.output, buf.getvalue())
    write_manifest(_manifest_for(args.output), "topics apply", argv,
                   {"input": str(args.input), "model": str(args.model)},
                   {"proportions": Path(args.output)}, {"seed": args.seed})


def cmd_fit(args, argv):
    matrix = FeatureMatrix.read_csv(_require_file(args.features, "feature matrix"))
    if matrix.shape[0] < args.k_folds:
        raise CliError(f"{matrix.shape[0]} rows cannot be split into {args.k_folds} folds", args.features)
    problem = lasso.RegressionProblem(matrix.rows, matrix.outcomes, matrix.names)
    grid = lasso.lambda_grid(lasso.lambda_max(problem), args.grid_size, args.grid_ratio)
    report = lasso.cross_validate(problem, grid, args.k_folds, args.seed)
    lam, fitted = lasso.select_lambda(report, problem, args.rule)
    out_path = Path(args.output)
    data = {
        "names": matrix.names,
        "w0": fitted.w0,
        "weights": [float(v) for v in fitted.weights],
        "lambda": lam,
        "converged": fitted.converged,
        "rule": args.rule,
        "cv": {
            "k_folds": report.k_folds,
            "seed": report.seed,
            "grid_size": int(grid.shape[0]),
            "lambda_max": float(grid[0]),
            "lambda_grid": report.lambda_grid.tolist(),
            "cv_errors": report.cv_errors.tolist(),
        },
    }
    atomic_write_json(out_path, data)
    config = {"features": str(args.features), "k_folds": args.k_folds, "grid_size": args.grid_size,
              "grid_ratio": args.grid_ratio, "rule": args.rule}
    write_manifest(_manifest_for(args.output), "fit", argv, config, {"model": out_path}, {"seed": args.seed})
    log.info("lambda=%.6g, %d nonzero weights", lam, int(np.count_nonzero(fitted.weights)))


def cmd_simulate(args, argv):
    cfg = ExperimentConfig.load(_require_file(args.config, "config file"))
    model = cfg.decision_model()
    out = Path(args.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory: {exc}", out, EXIT_IO) from None
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory not writable: {out}", out, EXIT_IO)
    results = run_experiment(cfg.simulation, model, workers=args.workers)
    paths = {"results": out / "results.json", "rounds": out / "rounds.csv", "config": out / "config.json"}
    write_results(paths["results"], cfg.simulation, results)
    write_round_logs(paths["rounds"], results)
    atomic_write_json(paths["config"], cfg.to_dict())
    seeds = {"master_seed": cfg.simulation.master_seed,
             "replica_seeds": [r.seed for r in results]}
    write_manifest(out / "manifest.json", "simulate", argv, cfg.to_dict(), paths, seeds)
    log.info("%d replicas of %s written to %s", len(results), cfg.simulation.scenario, out)


def _load_run(directory: Path) -> tuple[str, dict, list, dict]:
    results_path = _require_file(directory / "results.json", "results file")
    sim_cfg, results = read_results(results_path)
    analysis_cfg = {}
    cfg_path = directory / "config.json"
    if cfg_path.is_file():
        analysis_cfg = json.loads(cfg_path.read_text(encoding="utf-8")).get("analysis", {})
    return sim_cfg["scenario"], sim_cfg, results, analysis_cfg


def cmd_analyze(args, argv):
    summaries = {}
    configs = {}
    for d in args.inputs:
        d = Path(d)
        if not d.is_dir():
            raise CliError(f"input directory not found: {d}", d)
        scenario, sim_cfg, results, analysis_cfg = _load_run(d)
        name = scenario if scenario not in summaries else f"{scenario}:{d.name}"
        degrees = args.degrees or analysis_cfg.get("fit_degrees", [1, 3])
        n_boot = args.bootstrap if args.bootstrap is not None else analysis_cfg.get("bootstrap", 2000)
        seed = args.seed if args.seed is not None else analysis_cfg.get("bootstrap_seed", 0)
        summaries[name] = analysis.scenario_summary(results, sim_cfg["feature_universe"], degrees, n_boot, seed)
        summaries[name]["source"] = str(d)
        configs[name] = {"simulation": sim_cfg, "fit_degrees": list(degrees), "bootstrap": n_boot,
                         "bootstrap_seed": seed}
    report = {"scenarios": summaries, "comparison": analysis.compare(summaries)}
    atomic_write_json(args.output, report)
    write_manifest(_manifest_for(args.output), "analyze", argv, configs,
                   {"report": Path(args.output)},
                   {n: c["bootstrap_seed"] for n, c in configs.items()})


def cmd_abtest(args, argv):
    try:
        a = bayes_ab.ArmStats.from_impressions(args.clicks_a, args.impressions_a)
        b = bayes_ab.ArmStats.from_impressions(args.clicks_b, args.impressions_b)
    except InvalidInputError as exc:
        raise CliError(str(exc)) from None
    if args.method == "bayes":
        out = bayes_ab.decide(a, b, args.threshold).to_json()
    else:
        z = bayes_ab.z_statistic(a, b)
        ctr_a, ctr_b = a.ctr, b.ctr
        out = {
            "z": z,
            "significance": args.significance,
            "decision": bayes_ab.z_test(a, b, args.significance),
            "uplift": bayes_ab.uplift(ctr_a, ctr_b) if ctr_a and ctr_b is not None else None,
        }
    out["method"] = args.method
    text = json.dumps(out, sort_keys=True)
    print(text)
    if args.output:
        atomic_write_text(args.output, text + "\n")
        write_manifest(_manifest_for(args.output), "abtest", argv, vars_for_manifest(args),
                       {"result": Path(args.output)})


def vars_for_manifest(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "verbose") and not callable(v)}


def cmd_replay(args, argv):
    manifest_path = _require_file(args.manifest, "manifest")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    recorded = manifest.get("argv")
    if not recorded or recorded[0] == "replay":
        raise CliError("manifest has no replayable argv", manifest_path)
    here = os.getcwd()
    os.chdir(manifest.get("cwd", here))
    try:
        base = manifest_path.resolve().parent
        expected = {name: (base / e["path"], e["sha256"]) for name, e in manifest["artifacts"].items()}
        status = main(recorded)
        if status != 0:
            raise CliError(f"replayed command exited with status {status}", manifest_path)
        checks = {name: sha256_file(p) == digest for name, (p, digest) in expected.items()}
    finally:
        os.chdir(here)
    print(json.dumps({"manifest": str(manifest_path), "identical": checks}, sort_keys=True))
    if not all(checks.values()):
        raise CliError("replayed outputs differ from manifest checksums", manifest_path, EXIT_MISMATCH)


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p = argparse.ArgumentParser(prog="clickcascade", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", parents=[common], help="packages CSV -> feature matrix CSV")
    e.add_argument("--input", required=True)
    e.add_argument("--lexicons", help="directory of term,weight CSV lexicons (default: bundled demo set)")
    e.add_argument("--lda-model", help="add topic proportion columns from this LDA model")
    e.add_argument("--seed", type=int, default=0, help="seed for topic inference")
    e.add_argument("--output", required=True)
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("topics", parents=[common], help="fit or apply an LDA topic model")
    tsub = t.add_subparsers(dest="topics_command", required=True)
    tf = tsub.add_parser("fit", parents=[common])
    tf.add_argument("--input", required=True)
    tf.add_argument("--k", type=int, required=True, help="number of topics")
    tf.add_argument("--alpha", type=float, default=None, help="default 50/K")
    tf.add_argument("--beta", type=float, default=0.01)
    tf.add_argument("--iterations", type=int, default=500)
    tf.add_argument("--seed", type=int, default=0)
    tf.add_argument("--min-df", type=int, default=2)
    tf.add_argument("--output", required=True)
    tf.set_defaults(func=cmd_topics_fit)
    ta = tsub.add_parser("apply", parents=[common])
    ta.add_argument("--input", required=True)
    ta.add_argument("--model", required=True)
    ta.add_argument("--seed", type=int, default=0)
    ta.add_argument("--output", required=True)
    ta.set_defaults(func=cmd_topics_apply)

    f = sub.add_parser("fit", parents=[common], help="feature matrix -> LASSO decision model")
    f.add_argument("--features", required=True)
    f.add_argument("--k-folds", type=int, default=5)
    f.add_argument("--grid-size", type=int, default=100)
    f.add_argument("--grid-ratio", type=float, default=1e-3)
    f.add_argument("--rule", choices=["min", "one-se"], default="min")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--output", required=True)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", parents=[common], help="run the agent-based experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir", required=True)
    s.add_argument("--workers", type=int, default=None, help="process count (default from CLICKCASCADE_THREADS)")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", parents=[common], help="feature dynamics, final distributions and comparison")
    a.add_argument("--inputs", nargs="+", required=True, help="simulate output directories")
    a.add_argument("--output", required=True)
    a.add_argument("--bootstrap", type=int, default=None)
    a.add_argument("--seed", type=int, default=None, help="bootstrap seed")
    a.add_argument("--degrees", type=int, nargs="+", default=None)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("abtest", parents=[common], help="one-shot A/B calculator")
    b.add_argument("--clicks-a", type=int, required=True)
    b.add_argument("--impressions-a", type=int, required=True)
    b.add_argument("--clicks-b", type=int, required=True)
    b.add_argument("--impressions-b", type=int, required=True)
    b.add_argument("--threshold", type=float, default=bayes_ab.DEFAULT_THRESHOLD)
    b.add_argument("--significance", type=float, default=0.05)
    b.add_argument("--method", choices=["bayes", "ztest"], default="bayes")
    b.add_argument("--output", help="also write the JSON result (and a manifest) here")
    b.set_defaults(func=cmd_abtest)

    r = sub.add_parser("replay", parents=[common], help="re-run a manifest and verify output checksums")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def _report(kind: str, message: str, path: str | None, code: int) -> int:
    err = {"error": kind, "message": message}
    if path is not None:
        err["path"] = path
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, argv)
    except CliError as exc:
        return _report("invalid_input" if exc.code == EXIT_INVALID else "failed", str(exc), exc.path, exc.code)
    except RecordError as exc:
        print(json.dumps({"error": "invalid_records", "message": str(exc),
                          "problems": [{"row": r, "message": m} for r, m in exc.problems]}), file=sys.stderr)
        return EXIT_INVALID
    except InvalidInputError as exc:
        return _report("invalid_input", str(exc), None, EXIT_INVALID)
    except FileNotFoundError as exc:
        return _report("file_not_found", exc.strerror or str(exc), exc.filename, EXIT_IO)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        return _report("io_error", str(exc), getattr(exc, "filename", None), EXIT_IO)
    return 0


if __name__ == "__main__":
    sys.exit(main())
