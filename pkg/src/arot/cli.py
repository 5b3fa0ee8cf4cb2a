"""``arot`` command line: synthesize, ingest, featurize, train and evaluate.

Every subcommand writes its outputs plus ``manifest.json`` into ``--out``
(default ``$AROT_OUTPUT_ROOT/<subcommand>``). A manifest records the
resolved configuration, master seed and SHA-256 digests of inputs and
outputs; ``--manifest FILE`` replays a recorded run.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from importlib import metadata

import pandas as pd

from arot import experiments as ex
from arot.features import VARIANTS, build_dataset, compute_features, read_feature_table, write_feature_table
from arot.ingest import IngestError, join_flights, label_flights, parse_directory
from arot.modelsel import ALGORITHMS, ParamGrid, encode, fit_model, grid_search_cv, mean_absolute_error, model_digest
from arot.seeding import derive_seed
from arot.synthgen import generate_airport, load_profile

log = logging.getLogger("arot")

OUTPUT_ROOT_ENV = "AROT_OUTPUT_ROOT"
MANIFEST = "manifest.json"
RAW_FILES = ("regions.csv", "tracks.csv", "weather.csv", "runways.csv")
SUBCOMMANDS = ("synth", "ingest", "features", "train", "eval-unseen", "eval-generalized", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- argument handling ------------------------------------------------------

def _list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _choices(text, allowed, what):
    items = list(allowed) if text == "all" else _list(text)
    bad = [v for v in items if v not in allowed]
    if bad or not items:
        raise UsageError(f"unknown {what}: {','.join(bad) or text!r} (choose from {','.join(allowed)} or all)")
    return items


def _alphas(text):
    try:
        vals = [float(v) for v in _list(text)]
    except ValueError:
        raise UsageError(f"--alphas must be comma-separated numbers, got {text!r}") from None
    if not vals or any(not 0 < a < 1 for a in vals):
        raise UsageError("--alphas must lie strictly between 0 and 1")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="arot", description="Arrival runway occupancy time prediction workbench.")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", help="input directory")
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<subcommand>)")
        sp.add_argument("--manifest", help="replay the configuration recorded in this manifest")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
        sp.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS, help="log progress")

    sp = sub.add_parser("synth", help="generate synthetic airport CSVs")
    common(sp, data=False)
    sp.add_argument("--profile", help="bundled profile name (dca, mia, phx) or profile file")
    sp.add_argument("--airports", help="comma list of bundled profiles; one sub-directory each")
    sp.add_argument("--n", type=int, help="number of flights (default: the profile's)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise", type=float, help="override the profile's residual AROT noise (s)")

    sp = sub.add_parser("ingest", help="join and label raw CSVs into flights.csv")
    common(sp)
    sp.add_argument("--airports", help="process DATA/<airport> for each listed airport")

    sp = sub.add_parser("features", help="compute features.csv and prediction-point snapshots")
    common(sp)
    sp.add_argument("--airports", help="process DATA/<airport> for each listed airport")
    sp.add_argument("--airport", help="airport label for a single directory (default: its name)")
    sp.add_argument("--faf-nm", type=float, default=5.0, help="prediction ring radius (NM)")

    sp = sub.add_parser("train", help="grid-search and fit models on one feature table")
    common(sp)
    sp.add_argument("--variants", default="numerical")
    sp.add_argument("--algos", default="gbm")
    sp.add_argument("--grid", choices=("full", "reduced"), default="reduced")
    sp.add_argument("--seed", type=int, default=0)

    for name, helptext in (("eval-unseen", "nested CV on each airport's own data"),
                           ("eval-generalized", "generalized vs normal models across airports")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--airports", default="DCA,MIA,PHX")
        sp.add_argument("--algos", default="all" if name == "eval-unseen" else "rf,gbm")
        sp.add_argument("--grid", choices=("full", "reduced"), default="reduced")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--faf-nm", type=float, default=5.0, help="recorded only; features fix the ring")
        if name == "eval-unseen":
            sp.add_argument("--variants", default="all")
            sp.add_argument("--repeats", type=int, default=3, help="repeats of the outer k-fold")
        else:
            sp.add_argument("--variants", default="numerical")
            sp.add_argument("--alphas", default=",".join(f"{a:g}" for a in ex.DEFAULT_ALPHAS))
            sp.add_argument("--repeats", type=int, default=9, help="shuffles per alpha")
            sp.add_argument("--sources", default="1,2", help="source-set sizes to run")

    sp = sub.add_parser("report", help="rebuild summaries, plots and prediction-point tables")
    common(sp)
    sp.add_argument("--airports", help="airports whose DATA/<airport>/snapshots.csv to summarize")
    return p


# -- manifest ---------------------------------------------------------------

def _relative_digests(root, paths):
    out = {}
    for path in sorted(paths):
        key = os.path.relpath(path, root) if root else os.path.basename(path)
        out[key.replace(os.sep, "/")] = sha256_file(path)
    return out


def write_manifest(out_dir, command, config, inputs, outputs, data_root=None):
    manifest = {
        "artifact_version": _version(),
        "subcommand": command,
        "config": config,
        "seed": config.get("seed"),
        "inputs": _relative_digests(data_root, inputs),
        "outputs": _relative_digests(out_dir, outputs),
    }
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _config_from_args(args) -> dict:
    skip = {"command", "out", "manifest", "jobs", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _apply_manifest(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("subcommand") != args.command:
        raise UsageError(f"manifest is for {manifest.get('subcommand')!r}, not {args.command!r}")
    for k, v in manifest["config"].items():
        setattr(args, k, v)
    return manifest


def _check_inputs(manifest, data_root, inputs):
    if manifest is None:
        return
    got = _relative_digests(data_root, inputs)
    if got != manifest.get("inputs", {}):
        raise ex.DataError("input files differ from the manifest's recorded digests")


# -- subcommands ------------------------------------------------------------

def _airport_dirs(args):
    """(label, input dir, output dir) per airport for single- or multi-airport runs."""
    if not args.data:
        raise UsageError("--data is required")
    if getattr(args, "airports", None):
        return [(ap, ex.airport_dir(args.data, ap), os.path.join(args.out, ap)) for ap in _list(args.airports)]
    label = getattr(args, "airport", None) or os.path.basename(os.path.normpath(args.data)).upper()
    return [(label, args.data, args.out)]


def cmd_synth(args, manifest):
    if bool(args.profile) == bool(args.airports):
        raise UsageError("give exactly one of --profile or --airports")
    if args.n is not None and args.n < 1:
        raise UsageError("--n must be >= 1")
    jobs = [(args.profile, args.out)] if args.profile else [
        (ap.lower(), os.path.join(args.out, ap)) for ap in _list(args.airports)]
    outputs = []
    for name, out in jobs:
        try:
            profile = load_profile(name)
        except FileNotFoundError as exc:
            raise UsageError(str(exc)) from None
        n = args.n or profile.flights
        if n < 1:
            raise UsageError(f"profile {name} has no default flight count; pass --n")
        gen = generate_airport(profile, n, args.seed, out, noise_sigma=args.noise)
        outputs += list(gen.files.values())
        log.info("%s: %d flights, AROT %.2f +/- %.2f s", profile.code, n, gen.arot.mean(), gen.arot.std())
    return [], outputs, None


def _flights_frame(flights):
    rows = [(f.flight_id, f.callsign, f.origin, f.destination, f.flight_date.isoformat(), f.airline,
             f.aircraft_type, f.max_landing_weight, f.gate_assigned, f.runway_assigned,
             f.threshold_crossing_time.isoformat(timespec="milliseconds").replace("+00:00", "Z"),
             f.arot, len(f.tracks)) for f in flights]
    return pd.DataFrame(rows, columns=["flight_id", "callsign", "origin", "destination", "flight_date",
                                       "airline", "aircraft_type", "max_landing_weight_kg", "gate_assigned",
                                       "runway_assigned", "threshold_crossing_time", "arot_s", "n_tracks"])


def _labelled(path):
    bundle = parse_directory(path)
    records, jstats = join_flights(bundle)
    labelled, excluded = label_flights(records)
    return bundle, labelled, jstats, excluded


def cmd_ingest(args, manifest):
    inputs, outputs = [], []
    for label, src, out in _airport_dirs(args):
        inputs += [os.path.join(src, f) for f in RAW_FILES]
        bundle, labelled, jstats, excluded = _labelled(src)
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, "flights.csv")
        _flights_frame(labelled).to_csv(path, index=False, lineterminator="\n")
        stats = {
            "files": {k: {"rows": v.rows, "rejected": v.rejected, "reasons": dict(sorted(v.reasons.items()))}
                      for k, v in sorted(bundle.stats.items())},
            "join": {"keys": jstats.keys, "emitted": jstats.emitted, "no_runway": jstats.no_runway,
                     "no_tracks": jstats.no_tracks, "conflicting": jstats.conflicting},
            "labelled": len(labelled),
            "no_landing_occupancy": excluded,
        }
        spath = os.path.join(out, "ingest_stats.json")
        with open(spath, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(stats, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs += [path, spath]
        log.info("%s: %d labelled flights", label, len(labelled))
    return inputs, outputs, args.data


def cmd_features(args, manifest):
    if not args.faf_nm > 0:
        raise UsageError("--faf-nm must be positive")
    inputs, outputs = [], []
    for label, src, out in _airport_dirs(args):
        inputs += [os.path.join(src, f) for f in RAW_FILES]
        bundle, labelled, _, _ = _labelled(src)
        result = compute_features(labelled, bundle.runway_table(), bundle.weather, label, faf_distance=args.faf_nm)
        if len(result.table) == 0:
            raise ex.DataError(f"{label}: no flights survived feature extraction")
        os.makedirs(out, exist_ok=True)
        fpath = os.path.join(out, ex.FEATURES_FILE)
        write_feature_table(result.table, fpath)
        spath = os.path.join(out, ex.SNAPSHOTS_FILE)
        result.snapshots.to_csv(spath, index=False, float_format="%.6f", lineterminator="\n")
        ppath = os.path.join(out, "prediction_points.csv")
        with open(ppath, "w", encoding="utf-8", newline="") as fh:
            fh.write(ex.prediction_point_csv(ex.prediction_point_summary(result.snapshots)))
        outputs += [fpath, spath, ppath]
        log.info("%s: %d feature rows (%d excluded)", label, result.stats.rows, result.stats.excluded)
    return inputs, outputs, args.data


def cmd_train(args, manifest):
    if not args.data:
        raise UsageError("--data is required")
    variants = _choices(args.variants, VARIANTS, "variant")
    algos = _choices(args.algos, ALGORITHMS, "algorithm")
    path = args.data if os.path.isfile(args.data) else os.path.join(args.data, ex.FEATURES_FILE)
    if not os.path.exists(path):
        raise ex.DataError(f"missing feature table {path}")
    table = read_feature_table(path)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for variant in variants:
        ds = build_dataset(table, variant)
        for algo in algos:
            seed = derive_seed(args.seed, "train", variant, algo)
            gs = grid_search_cv(ds, ParamGrid.preset(algo, args.grid), 3, derive_seed(seed, "search"))
            X, _, enc = encode(ds)
            model = fit_model(algo, X, ds.y, gs.best_params, derive_seed(seed, "refit"))
            trees = getattr(model, "trees", (model,))
            doc = {
                "algorithm": algo,
                "variant": variant,
                "columns": list(ds.columns),
                "categories": {c: sorted(m, key=m.get) for c, m in enc.mapping.items()},
                "best_params": gs.best_params,
                "inner_cv_mae_s": gs.mean_mae,
                "train_mae_s": mean_absolute_error(ds.y, model.predict(X)),
                "n_rows": len(ds),
                "digest": model_digest(model),
                "init": getattr(model, "init", None),
                "learning_rate": getattr(model, "learning_rate", None),
                "trees": [t.to_dict() for t in trees],
            }
            mpath = os.path.join(args.out, f"model_{variant}_{algo}.json")
            with open(mpath, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(doc, fh, sort_keys=True)
                fh.write("\n")
            outputs.append(mpath)
            log.info("%s/%s: params %s, inner MAE %.3f s", variant, algo, gs.best_params, min(gs.mean_mae))
    return [path], outputs, os.path.dirname(path)


def _feature_inputs(args, airports):
    return [os.path.join(ex.airport_dir(args.data, ap), ex.FEATURES_FILE) for ap in airports]


def cmd_eval_unseen(args, manifest):
    if not args.data:
        raise UsageError("--data is required")
    cfg = ex.ExperimentConfig(
        airports=tuple(_list(args.airports)), variants=tuple(_choices(args.variants, VARIANTS, "variant")),
        algos=tuple(_choices(args.algos, ALGORITHMS, "algorithm")), grid=args.grid, seed=args.seed,
        faf_distance=args.faf_nm, out_dir=args.out, cv_repeats=args.repeats, jobs=args.jobs)
    inputs = _feature_inputs(args, cfg.airports)
    _check_inputs(manifest, args.data, inputs)
    report = ex.run_unseen_experiment(cfg, ex.load_tables(args.data, cfg.airports))
    outputs = ex.write_unseen_outputs(report, args.out)
    targets = os.path.join(args.out, "unseen_targets.csv")
    with open(targets, "w", encoding="utf-8", newline="") as fh:
        fh.write(ex._csv_text(("airport", "n", "arot_mean_s", "arot_sigma_s"),
                              ((ap, n, f"{m:.6f}", f"{s:.6f}") for ap, (n, m, s) in report.targets.items())))
    return inputs, outputs + [targets], args.data


def cmd_eval_generalized(args, manifest):
    if not args.data:
        raise UsageError("--data is required")
    variant = _choices(args.variants, VARIANTS, "variant")
    if len(variant) != 1:
        raise UsageError("eval-generalized takes a single variant")
    try:
        sizes = sorted({int(v) for v in _list(args.sources)})
    except ValueError:
        raise UsageError("--sources must list integers") from None
    airports = tuple(_list(args.airports))
    if not sizes or any(not 1 <= s < len(airports) for s in sizes):
        raise UsageError("--sources sizes must be between 1 and the number of airports minus one")
    cfg = ex.ExperimentConfig(
        airports=airports, variants=tuple(variant), algos=tuple(_choices(args.algos, ALGORITHMS, "algorithm")),
        alphas=tuple(_alphas(args.alphas)), repeats=args.repeats, grid=args.grid, seed=args.seed,
        faf_distance=args.faf_nm, out_dir=args.out, jobs=args.jobs)
    inputs = _feature_inputs(args, airports)
    _check_inputs(manifest, args.data, inputs)
    cases = [c for s in sizes for c in ex.generalized_cases(airports, s)]
    rows = ex.run_generalized_experiment(cfg, ex.load_tables(args.data, airports), cases, variant[0])
    return inputs, ex.write_generalized_outputs(rows, args.out), args.data


def cmd_report(args, manifest):
    if not args.data:
        raise UsageError("--data is required")
    inputs, outputs = [], []
    os.makedirs(args.out, exist_ok=True)
    unseen = os.path.join(args.data, "unseen_report.csv")
    if os.path.exists(unseen):
        inputs.append(unseen)
        targets = {}
        tpath = os.path.join(args.data, "unseen_targets.csv")
        if os.path.exists(tpath):
            inputs.append(tpath)
            for r in pd.read_csv(tpath, dtype={"airport": str}).itertuples(index=False):
                targets[r.airport] = (int(r.n), float(r.arot_mean_s), float(r.arot_sigma_s))
        report = ex.read_unseen_report(unseen, targets)
        for ap in dict.fromkeys(k[0] for k in report.reports):
            outputs.append(ex.plot_unseen(report, ap, os.path.join(args.out, f"unseen_{ap}.svg")))
        if targets:
            outputs.append(ex._write(os.path.join(args.out, "unseen_summary.csv"), report.summary_csv()))
    gen = os.path.join(args.data, "generalized_report.csv")
    if os.path.exists(gen):
        inputs.append(gen)
        rows = ex.read_generalized_report(gen)
        outputs += ex.write_generalized_outputs(rows, args.out)[1:]
    if args.airports:
        frames = []
        for ap in _list(args.airports):
            spath = os.path.join(ex.airport_dir(args.data, ap), ex.SNAPSHOTS_FILE)
            if not os.path.exists(spath):
                raise ex.DataError(f"missing {spath}")
            inputs.append(spath)
            frames.append(pd.read_csv(spath, dtype={"airport": str, "runway": str, "flight_id": str}))
        ppath = os.path.join(args.out, "prediction_points.csv")
        outputs.append(ex._write(ppath, ex.prediction_point_csv(ex.prediction_point_summary(pd.concat(frames)))))
    if not inputs:
        raise ex.DataError(f"nothing to report in {args.data}")
    return inputs, outputs, args.data


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "train": cmd_train,
    "eval-unseen": cmd_eval_unseen,
    "eval-generalized": cmd_eval_generalized,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = _apply_manifest(args) if args.manifest else None
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if not args.out:
            args.out = os.path.join(os.environ.get(OUTPUT_ROOT_ENV, "arot_out"), args.command)
        os.makedirs(args.out, exist_ok=True)
        config = _config_from_args(args)
        inputs, outputs, data_root = COMMANDS[args.command](args, manifest)
        if manifest is not None and args.command in ("ingest", "features", "train", "report"):
            _check_inputs(manifest, data_root, inputs)
        write_manifest(args.out, args.command, config, inputs, outputs, data_root)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"arot: error: {exc}", file=sys.stderr)
        return 1
    except (ex.DataError, IngestError, OSError, ValueError, KeyError) as exc:
        print(f"arot: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
