"""Command-line interface: one executable exposing the whole pipeline.

Every subcommand logs its fully resolved configuration as one JSON line
before doing any work, which is what makes runs replayable. Exit codes:
0 success, 1 usage error, 2 pipeline error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import default_region_map
from .dataset import load_manifest, save_manifest, split_dataset, union_manifests
from .detector import DetectorBackend, evaluate, fit_mean_shape
from .errors import StylemarkError
from .experiment import (
    ExperimentConfig,
    Seeds,
    builtin_configs,
    compare,
    crop_manifest,
    build_rotated,
    run as run_experiment,
    run_sweep,
)
from .metrics import (
    MetricsReport,
    Normalizer,
    PredictionSet,
    RegionMap,
    aggregate,
    per_region_nme,
    score_predictions,
)
from .report import PlotSpec, TableRow, emit_plot, emit_table, parse_table_csv
from .selection import (
    Pairing,
    StylePool,
    assign_styles,
    load_ranking,
    make_test_st,
    rank_by_nme,
    save_ranking,
    sst_select,
)
from .style import jobs_from_pairs, run_jobs
from .synthetic import generate_dataset

log = logging.getLogger("stylemark")

USAGE_ERROR = 1
PIPELINE_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; the CLI contract
    reserves 2 for pipeline failures, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _global_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("STYLEMARK_SEED")
    return int(env) if env else 0


def _resolve(workdir: str, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(workdir) / p


def _log_invocation(args: argparse.Namespace) -> None:
    resolved = {k: str(v) if isinstance(v, Path) else v
                for k, v in vars(args).items() if k != "func"}
    log.info("resolved config: %s", json.dumps(resolved, sort_keys=True))


def _normalizer_from_args(args) -> Normalizer:
    if args.normalizer == "bbox-diagonal":
        return Normalizer()
    if args.normalizer.startswith("inter:"):
        i, j = args.normalizer[len("inter:"):].split(",")
        return Normalizer(kind="inter_landmark", i=int(i), j=int(j))
    if args.normalizer.startswith("fixed:"):
        return Normalizer(kind="fixed", value=float(args.normalizer[len("fixed:"):]))
    raise StylemarkError(f"unknown normalizer {args.normalizer!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workdir", default=".", help="base directory for relative paths")
    p.add_argument("--seed", type=int, default=None,
                   help="global seed (falls back to STYLEMARK_SEED, then 0)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def cmd_ingest(args) -> int:
    manifest = load_manifest(_resolve(args.workdir, args.input))
    save_manifest(manifest, _resolve(args.workdir, args.out))
    log.info("ingested %d records into %s", len(manifest), args.out)
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(_resolve(args.workdir, args.manifest))
    seed = _global_seed(args.seed)
    train, test = split_dataset(manifest, args.train, args.test, seed)
    stem = _resolve(args.workdir, args.manifest)
    out_train = _resolve(args.workdir, args.out_train) if args.out_train \
        else stem.with_name("train.jsonl")
    out_test = _resolve(args.workdir, args.out_test) if args.out_test \
        else stem.with_name("test.jsonl")
    save_manifest(train, out_train)
    save_manifest(test, out_test)
    log.info("wrote %s (%d) and %s (%d)", out_train, len(train), out_test, len(test))
    return 0


def cmd_crop(args) -> int:
    manifest = load_manifest(_resolve(args.workdir, args.manifest))
    out_dir = _resolve(args.workdir, args.out)
    cropped = crop_manifest(manifest, args.margin, out_dir, tag=manifest.tag)
    save_manifest(cropped, out_dir / "manifest.jsonl")
    log.info("cropped %d records into %s", len(cropped), out_dir)
    return 0


def cmd_rank(args) -> int:
    gt = load_manifest(_resolve(args.workdir, args.manifest))
    norm = _normalizer_from_args(args)
    if args.predictions:
        predictions = PredictionSet.load(_resolve(args.workdir, args.predictions))
    else:
        model = fit_mean_shape(gt, procrustes=args.procrustes)
        predictions = evaluate(DetectorBackend.parse(args.detector, args.procrustes),
                               gt, model=model)
    ranked = rank_by_nme(predictions, gt, norm)
    save_ranking(ranked, _resolve(args.workdir, args.out))
    log.info("ranked %d records into %s", len(ranked), args.out)
    return 0


def cmd_select(args) -> int:
    ranked = load_ranking(_resolve(args.workdir, args.ranking))
    pool = sst_select(ranked, args.n)
    out = _resolve(args.workdir, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"n": pool.n, "members": list(pool.members)}, indent=2)
                   + "\n", encoding="utf-8")
    log.info("selected pool of %d into %s", len(pool.members), args.out)
    return 0


def cmd_pair(args) -> int:
    seed = _global_seed(args.seed)
    if args.test_st:
        test = load_manifest(_resolve(args.workdir, args.manifest))
        train = load_manifest(_resolve(args.workdir, args.styles))
        pairing = make_test_st(test, train, seed)
    else:
        train = load_manifest(_resolve(args.workdir, args.manifest))
        if args.pool:
            pool_data = json.loads(_resolve(args.workdir, args.pool).read_text())
            pool = StylePool(n=pool_data["n"], members=tuple(pool_data["members"]))
        else:
            pool = StylePool(n=len(train), members=tuple(train.ids()))
        pairing = assign_styles(train, pool, seed,
                                forbid_self=not args.allow_self)
    pairing.save(_resolve(args.workdir, args.out))
    log.info("paired %d records into %s", len(pairing.pairs), args.out)
    return 0


def cmd_style(args) -> int:
    contents = load_manifest(_resolve(args.workdir, args.manifest))
    styles = load_manifest(_resolve(args.workdir, args.styles)) if args.styles \
        else contents
    pairing = Pairing.load(_resolve(args.workdir, args.pairing))
    seed = _global_seed(args.seed)
    jobs = jobs_from_pairs(pairing.pairs, contents, styles, global_seed=seed,
                           job_prefix=args.tag)
    out_dir = _resolve(args.workdir, args.out)
    outcome = run_jobs(jobs, args.backend, args.parallelism, out_dir, args.tag,
                       contents, styles, timeout=args.timeout)
    save_manifest(outcome.manifest, out_dir / "manifest.jsonl")
    log.info("styled %d/%d jobs (%d failed) into %s", len(outcome.results),
             len(jobs), len(outcome.failures), out_dir)
    for failure in outcome.failures:
        log.warning("failed job %s: %s", failure.job_id, failure.error)
    return 0


def cmd_augment(args) -> int:
    manifests = [load_manifest(_resolve(args.workdir, m)) for m in args.inputs]
    if args.add_rotated:
        seed = _global_seed(args.seed)
        out_dir = _resolve(args.workdir, args.out).parent / "rotated"
        rotated = build_rotated(manifests[0], seed, args.rotation_range, out_dir)
        manifests.append(rotated)
    tag = args.tag or "+".join(m.tag for m in manifests)
    union = union_manifests(tag, manifests)
    save_manifest(union, _resolve(args.workdir, args.out))
    log.info("union of %d manifests (%d records) into %s",
             len(manifests), len(union), args.out)
    return 0


def cmd_train_eval(args) -> int:
    train = load_manifest(_resolve(args.workdir, args.train))
    test = load_manifest(_resolve(args.workdir, args.test))
    norm = _normalizer_from_args(args)
    backend = DetectorBackend.parse(args.detector, args.procrustes)
    model = fit_mean_shape(train, procrustes=args.procrustes) \
        if backend.kind == "mean-shape" else None
    predictions = evaluate(backend, test, model=model)
    per_image = score_predictions(predictions, test, norm)
    per_region = None
    region_map = None
    if args.regions:
        region_map = RegionMap.from_file(_resolve(args.workdir, args.regions))
    elif test.landmark_count == 48:
        region_map = default_region_map(48)
    if region_map is not None:
        gt_by_id = test.by_id()
        per_region = {rid: per_region_nme(predictions[rid], gt_by_id[rid].landmarks,
                                          region_map, norm)
                      for rid in sorted(per_image)}
    report = aggregate(args.tag, per_image, args.threshold, per_region=per_region)
    out = _resolve(args.workdir, args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "metrics.json")
    predictions.save(out / "predictions.jsonl")
    emit_table([TableRow(configuration=report.config_tag, nme=report.nme,
                         fr=report.fr_count)], out / "report")
    log.info("NME %.3f, FR %d/%d -> %s", report.nme, report.fr_count,
             len(per_image), out)
    return 0


def cmd_experiment(args) -> int:
    if not args.builtin and not args.config:
        log.error("experiment run needs --config or --builtin")
        return USAGE_ERROR
    root = load_manifest(_resolve(args.workdir, args.root))
    out_dir = _resolve(args.workdir, args.out)
    if args.builtin:
        region_map = default_region_map(root.landmark_count)
        configs = builtin_configs(
            n_train=args.train, n_test=args.test, backend=args.backend,
            seeds=Seeds(split=_global_seed(args.seed)),
            parallelism=args.parallelism, region_map=region_map,
        )
        if args.only:
            configs = [c for c in configs if c.name in set(args.only)]
            if not configs:
                raise StylemarkError(f"no builtin config matches {args.only}")
        results = run_sweep(configs, root, out_dir)
    else:
        config = ExperimentConfig.load(_resolve(args.workdir, args.config))
        results = [run_experiment(config, root, out_dir)]
    for result in results:
        if result.report is not None:
            log.info("%s: NME %.3f FR %d", result.name, result.report.nme,
                     result.report.fr_count)
        else:
            log.info("%s: study %s", result.name,
                     json.dumps(result.study.to_dict()) if result.study else "?")
    return 0


def cmd_report(args) -> int:
    results_dir = _resolve(args.workdir, args.results)
    out_dir = _resolve(args.workdir, args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    comparison = results_dir / "comparison.csv"
    if comparison.exists():
        rows = parse_table_csv(comparison)
    else:
        for metrics_path in sorted(results_dir.glob("*/reports/metrics.json")):
            report = MetricsReport.load(metrics_path)
            rows.append(TableRow(configuration=report.config_tag, nme=report.nme,
                                 fr=report.fr_count))
    if not rows:
        raise StylemarkError(f"no reports found under {results_dir}")
    emit_table(rows, out_dir / "comparison")
    emit_plot(PlotSpec(
        kind="bar_nme_fr",
        series={"nme": [r.nme for r in rows], "fr": [float(r.fr) for r in rows]},
        labels=[r.configuration for r in rows],
        output_path=out_dir / "comparison_nme_fr.png",
        title="NME and FR by configuration",
    ))
    log.info("emitted comparison for %d configurations into %s", len(rows), out_dir)
    return 0


def cmd_synthetic(args) -> int:
    seed = _global_seed(args.seed)
    manifest = generate_dataset(_resolve(args.workdir, args.out), args.count, seed,
                                image_size=args.size,
                                landmark_count=args.landmarks)
    log.info("generated %d synthetic faces into %s", len(manifest), args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="stylemark", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate and normalize a manifest")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="seeded train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--out-train")
    p.add_argument("--out-test")
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("crop", help="crop faces to landmark squares")
    p.add_argument("--manifest", required=True)
    p.add_argument("--margin", type=float, default=0.10)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_crop)

    p = sub.add_parser("rank", help="rank records by prediction NME")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", help="prediction file; omitted = builtin detector")
    p.add_argument("--detector", default="mean-shape")
    p.add_argument("--procrustes", action="store_true")
    p.add_argument("--normalizer", default="bbox-diagonal")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("select", help="take the top-N style pool from a ranking")
    p.add_argument("--ranking", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("pair", help="assign one style source per content image")
    p.add_argument("--manifest", required=True, help="content manifest")
    p.add_argument("--pool", help="pool file from 'select'; omitted = whole manifest")
    p.add_argument("--styles", help="style manifest (for --test-st)")
    p.add_argument("--test-st", action="store_true",
                   help="pair test images with random training images")
    p.add_argument("--allow-self", action="store_true")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("style", help="run style-transfer jobs over a pairing")
    p.add_argument("--manifest", required=True, help="content manifest")
    p.add_argument("--styles", help="style manifest; omitted = content manifest")
    p.add_argument("--pairing", required=True)
    p.add_argument("--backend", default="color-stat",
                   help="color-stat | hist-match | external:<cmd>")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--tag", default="Styled")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_style)

    p = sub.add_parser("augment", help="union manifests into a training set")
    p.add_argument("inputs", nargs="+", help="manifests to union")
    p.add_argument("--add-rotated", action="store_true",
                   help="also add rotated duplicates of the first manifest")
    p.add_argument("--rotation-range", type=float, default=30.0)
    p.add_argument("--tag")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train-eval", help="fit detector on train, score on test")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--detector", default="mean-shape",
                   help="mean-shape | external:<cmd>")
    p.add_argument("--procrustes", action="store_true")
    p.add_argument("--normalizer", default="bbox-diagonal",
                   help="bbox-diagonal | inter:i,j | fixed:value")
    p.add_argument("--threshold", type=float, default=10.0)
    p.add_argument("--regions", help="region map JSON file")
    p.add_argument("--tag", default="eval")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("experiment", help="run experiment configurations")
    exp_sub = p.add_subparsers(dest="experiment_command", required=True,
                               parser_class=_Parser)
    pr = exp_sub.add_parser("run", help="run one config file or the builtin sweep")
    pr.add_argument("--config", help="experiment config JSON")
    pr.add_argument("--builtin", action="store_true", help="run the builtin sweep")
    pr.add_argument("--only", nargs="*", help="restrict builtin sweep to these names")
    pr.add_argument("--root", required=True, help="root manifest")
    pr.add_argument("--train", type=int, default=500)
    pr.add_argument("--test", type=int, default=100)
    pr.add_argument("--backend", default="color-stat")
    pr.add_argument("--parallelism", type=int, default=1)
    pr.add_argument("--out", required=True)
    _add_common(pr)
    pr.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="emit tables and plots from results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synthetic", help="generate a procedural demo dataset")
    p.add_argument("--count", type=int, default=60)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--landmarks", type=int, default=48)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synthetic)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2) if hasattr(args, "verbose") \
        else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(min(level, logging.INFO))
    _log_invocation(args)
    try:
        return args.func(args)
    except StylemarkError as e:
        log.error("%s", e)
        return PIPELINE_ERROR


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
