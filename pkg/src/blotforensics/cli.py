"""
Command-line interface.

Exit codes: 0 success, 1 contract error (bad flags, inconsistent inputs),
2 I/O error (missing or undecodable files, images skipped during extraction).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .classify import MODEL_FORMAT, attribute, fit_one_class, load_model, save_model
from .core import (ContractError, DatasetManifest, FeatureFamily, ensure_dir, feature_matrix,
                   load_features, load_image, save_features)
from .evaluation import (closed_set, noise_grid, one_vs_rest, open_set, read_grid_csv,
                         write_grid_csv)
from .features import (FeatureConfig, extract_features, extract_table, input_transform, iter_manifest,
                       model_input)
from .noise import NoiseMethod
from .spectral import parse_bands
from .synthgen import ALL_GENERATORS, default_specs, gen_corpus, load_specs

log = logging.getLogger("blotforensics")

METADATA = "metadata.json"
EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Flag errors are contract errors (exit 1), raised before any data is read."""

    def error(self, message):
        raise ContractError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# feature configuration: flags > config file > defaults

_FLAG_TO_FIELD = {
    "family": "family", "method": "method", "crop": "crop", "patch_size": "patch",
    "bands": "bands", "glcm_levels": "glcm_levels", "glcm_distances": "glcm_distances",
    "cross_mode": "cross_mode", "nlmeans_strength": "nlmeans_strength",
    "nlmeans_patch": "nlmeans_patch", "nlmeans_window": "nlmeans_window",
    "pmap_radius": "pmap_radius",
}


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bands(text: str):
    try:
        return parse_bands(text)
    except ContractError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def feature_flags(parser: argparse.ArgumentParser, with_family: bool = True) -> None:
    g = parser.add_argument_group("feature configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="JSON file with feature configuration keys")
    if with_family:
        g.add_argument("--family", choices=[f.value for f in FeatureFamily],
                       help="feature family (default PATCH-FFT-PEAKS)")
    g.add_argument("--method", choices=[m.value for m in NoiseMethod],
                   help="noise extractor (default bammey-c)")
    g.add_argument("--crop", type=int, help="central crop size in pixels (default 256)")
    g.add_argument("--patch-size", type=int, help="PATCH-FFT-PEAKS tile size (default 64)")
    g.add_argument("--bands", type=_bands,
                   help='frequency bands as "fx,fy;fx,fy", e.g. "1/2,1/2;1/4,0" (default: 24 bands)')
    g.add_argument("--glcm-levels", type=int, help="GLCM quantization levels (default 64)")
    g.add_argument("--glcm-distances", type=_int_list, help="GLCM distances (default 4,8,16,32)")
    g.add_argument("--cross-mode", choices=["direct", "subtract"],
                   help="bammey-c residual: direct convolution or image minus convolution")
    g.add_argument("--nlmeans-strength", type=float, help="non-local means filtering strength h (0.1)")
    g.add_argument("--nlmeans-patch", type=int, help="non-local means patch size (7)")
    g.add_argument("--nlmeans-window", type=int, help="non-local means search window (21)")
    g.add_argument("--pmap-radius", type=int, help="P-map neighbourhood radius (1)")


def explicit_feature_flags(args) -> dict:
    return {field: getattr(args, flag) for flag, field in _FLAG_TO_FIELD.items()
            if getattr(args, flag, None) is not None}


def resolve_config(args, base: Optional[dict] = None) -> FeatureConfig:
    """Defaults, then ``base`` / ``--config`` file values, then explicit flags."""
    data = dict(base or {})
    if getattr(args, "config", None) is not None:
        with open(args.config) as fh:
            try:
                file_data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ContractError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(file_data, dict):
            raise ContractError(f"{args.config}: configuration must be a JSON object")
        data.update(file_data)
    data.update(explicit_feature_flags(args))
    return FeatureConfig.from_dict(data)


# --------------------------------------------------------------------------
# helpers

def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _load_manifest(path, sources: Optional[Sequence[str]] = None) -> DatasetManifest:
    manifest = DatasetManifest.load(path)
    if sources:
        missing = sorted(set(sources) - set(manifest.labels))
        if missing:
            raise ContractError(f"sources {missing} not in manifest (has {manifest.labels})")
        manifest = manifest.subset(sources)
    return manifest


def _manifest_features(manifest: DatasetManifest, config: FeatureConfig, quiet: bool = False):
    """Feature matrix in manifest order; raises OSError listing undecodable images."""
    failures: list = []
    rows, labels = [], []
    n = len(manifest.entries)
    for i, (rel, img, label) in enumerate(iter_manifest(manifest, failures)):
        rows.append(extract_features(img, config).values)
        labels.append(label)
        if not quiet and ((i + 1) % 100 == 0 or i + 1 == n):
            _progress(f"extract: {i + 1}/{n} images")
    if failures:
        listing = "\n".join(f"  {p}: {e}" for p, e in failures)
        raise OSError(f"{len(failures)} image(s) could not be decoded:\n{listing}")
    return np.vstack(rows), np.asarray(labels, dtype=object)


def _features_from_args(args, config: FeatureConfig, sources=None):
    if getattr(args, "features", None):
        rows = load_features(args.features)
        if not rows:
            raise ContractError(f"{args.features}: no feature rows")
        fv = rows[0][0]
        if fv.family != config.family or fv.extractor != config.method:
            raise ContractError(f"{args.features} holds {fv.family}/{fv.extractor} features but the "
                                f"configuration asks for {config.family}/{config.method}")
        X, y = feature_matrix(rows)
        if sources:
            keep = np.isin(y.astype(str), list(sources))
            X, y = X[keep], y[keep]
        return X, y
    if not getattr(args, "manifest", None):
        raise ContractError("either --manifest or --features is required")
    return _manifest_features(_load_manifest(args.manifest, sources), config, args.quiet)


def _write_report(report, args) -> None:
    if args.out:
        ensure_dir(Path(args.out).parent)
        report.save(args.out)
    print(report.summary())
    if args.figures:
        from . import plotting
        d = ensure_dir(args.figures)
        stem = report.protocol
        plotting.plot_confusion(report, d / f"{stem}-confusion.png")
        plotting.plot_roc(report, d / f"{stem}-roc.png")


# --------------------------------------------------------------------------
# commands

def cmd_gen_fixtures(args) -> int:
    if args.spec:
        specs = load_specs(args.spec)
    else:
        specs = default_specs(count=args.count, size=args.size, seed=args.seed,
                              generators=args.generators or ALL_GENERATORS)
    manifest = gen_corpus(specs, args.out)
    print(f"wrote {len(manifest.entries)} images ({', '.join(manifest.labels)}) to {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    config = resolve_config(args)
    manifest = _load_manifest(args.manifest, args.sources)
    failures: list = []
    rows = []
    n = len(manifest.entries)
    maps_input = {}
    for i, (rel, img, label) in enumerate(iter_manifest(manifest, failures)):
        rows.append((extract_features(img, config), label))
        if args.maps and len(maps_input.setdefault(label, [])) < args.maps_count:
            maps_input[label].append(img)
        if not args.quiet and ((i + 1) % 100 == 0 or i + 1 == n):
            _progress(f"extract: {i + 1}/{n} images")
    ensure_dir(Path(args.out).parent)
    save_features(rows, args.out)
    print(f"wrote {len(rows)} rows of {config.dim} {config.family}/{config.method} features to {args.out}")
    if args.maps:
        _write_maps(maps_input, config, Path(args.maps))
    if failures:
        for path, err in failures:
            print(f"skipped {path}: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _write_maps(images_by_source, config: FeatureConfig, out: Path) -> None:
    from . import plotting
    maps = plotting.average_maps(images_by_source, config)
    ensure_dir(out)
    for quantity, per_source in maps.items():
        slug = quantity.lower().replace(" ", "-")
        for source, m in per_source.items():
            plotting.write_pgm(m, out / f"{source}-{slug}.pgm")
            plotting.write_matrix_csv(m, out / f"{source}-{slug}.csv")
    plotting.plot_matrix_grid(maps, out / "average-maps.png")
    print(f"wrote average spectra and co-occurrence maps to {out}")


def cmd_train(args) -> int:
    config = resolve_config(args)
    X, y = _features_from_args(args, config, args.sources)
    out = ensure_dir(args.out_dir)
    sources = sorted(set(y.tolist()), key=str)
    meta = {"format": MODEL_FORMAT, "classifier": args.classifier, "seed": args.seed,
            "feature_config": config.to_dict(), "feature_names": config.feature_names(),
            "input_transform": input_transform(config.family, args.classifier), "sources": {}}
    for j, source in enumerate(sources):
        Xs = X[y == source]
        model = fit_one_class(args.classifier, model_input(Xs, config.family, args.classifier),
                              seed=args.seed + 10 * j)
        fname = f"{source}.json"
        save_model(model, out / fname)
        meta["sources"][source] = {"model": fname, "n_train": int(Xs.shape[0]),
                                   "feature_mean": Xs.mean(axis=0).tolist(),
                                   "feature_std": Xs.std(axis=0).tolist()}
        print(f"trained {args.classifier} on {Xs.shape[0]} {source} images")
    if args.threshold is not None:
        meta["threshold"] = args.threshold
    with open(out / METADATA, "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def explain(x: np.ndarray, stats: dict, names: Sequence[str], top: int = 5) -> List[dict]:
    """
    Per-feature contribution ``value * z`` with ``z`` the feature's z-score
    under the chosen source's training distribution; largest magnitudes first.
    """
    mean = np.asarray(stats["feature_mean"])
    std = np.asarray(stats["feature_std"])
    z = (x - mean) / np.where(std > 0, std, 1.0)
    contrib = x * z
    order = np.argsort(-np.abs(contrib), kind="stable")[:top]
    return [{"feature": names[i], "value": float(x[i]), "z": float(z[i]),
             "contribution": float(contrib[i])} for i in order]


def cmd_attribute(args) -> int:
    model_dir = Path(args.model_dir)
    with open(model_dir / METADATA) as fh:
        meta = json.load(fh)
    if meta.get("format") != MODEL_FORMAT:
        raise ContractError(f"{model_dir / METADATA}: unsupported format {meta.get('format')!r}")
    trained = FeatureConfig.from_dict(meta["feature_config"])
    requested = resolve_config(args, base=meta["feature_config"])
    if requested != trained:
        diff = {k: (v, trained.to_dict()[k]) for k, v in requested.to_dict().items()
                if trained.to_dict()[k] != v}
        detail = ", ".join(f"{k}: query {q!r} vs models {m!r}" for k, (q, m) in diff.items())
        raise ContractError(f"feature configuration does not match the trained models ({detail}); "
                            f"rerun without these flags or retrain")
    models = {s: load_model(model_dir / info["model"]) for s, info in meta["sources"].items()}
    img = load_image(args.image)
    fv = extract_features(img, trained)
    t = args.threshold if args.threshold is not None else meta.get("threshold")
    result = attribute(models, model_input(fv.values[None, :], trained.family, meta["classifier"]),
                       t=t)
    out = result.to_dict()
    out["image"] = str(args.image)
    out["classifier"] = meta["classifier"]
    out["provenance"] = {"family": trained.family, "extractor": trained.method,
                         "config": trained.to_dict()}
    out["explanation"] = {"source": result.best,
                          "top_features": explain(fv.values, meta["sources"][result.best],
                                                  meta["feature_names"], args.top)}
    out["features"] = dict(zip(meta["feature_names"], map(float, fv.values)))
    print(json.dumps(out, indent=1))
    return EXIT_OK


def cmd_eval_closed(args) -> int:
    config = resolve_config(args)
    X, y = _features_from_args(args, config, args.sources)
    report = closed_set(X, y, family=config.family, method=config.method, folds=args.folds,
                        seed=args.seed, n_trees=args.n_trees, shuffle_labels=args.shuffle_labels,
                        resubstitution=args.resubstitution)
    _write_report(report, args)
    return EXIT_OK


def cmd_eval_open(args) -> int:
    config = resolve_config(args)
    X, y = _features_from_args(args, config)
    labels = sorted(set(y.tolist()), key=str)
    for s in (args.pristine_a, args.pristine_b):
        if s not in labels:
            raise ContractError(f"pristine source {s!r} not found (have {labels})")
    synthetic = args.synthetic or [s for s in labels if s not in (args.pristine_a, args.pristine_b)]
    sources = {s: X[y == s] for s in [args.pristine_a, args.pristine_b] + list(synthetic)}
    report = open_set(sources, args.pristine_a, args.pristine_b, synthetic,
                      classifier=args.classifier, family=config.family, method=config.method,
                      seed=args.seed)
    _write_report(report, args)
    return EXIT_OK


def cmd_eval_ovr(args) -> int:
    config = resolve_config(args)
    X, y = _features_from_args(args, config, args.sources)
    report = one_vs_rest(X, y, classifier=args.classifier, family=config.family,
                         method=config.method, seed=args.seed, threshold=args.threshold)
    _write_report(report, args)
    return EXIT_OK


def cmd_noise_grid(args) -> int:
    config = resolve_config(args)
    families = args.families or [f.value for f in FeatureFamily]
    methods = args.methods or [m.value for m in NoiseMethod]
    manifest = _load_manifest(args.manifest, args.sources)
    failures: list = []
    table = extract_table(iter_manifest(manifest, failures), families, methods, base=config,
                          progress=not args.quiet)
    if failures:
        listing = "\n".join(f"  {p}: {e}" for p, e in failures)
        raise OSError(f"{len(failures)} image(s) could not be decoded:\n{listing}")
    t0 = time.perf_counter()
    reports = noise_grid(table, families, methods, classifier=args.classifier, seed=args.seed)
    out = Path(args.out_csv)
    ensure_dir(out.parent)
    write_grid_csv(reports, out)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=1)
            fh.write("\n")
    print(f"{'family':<17}{'method':<12}{'Bacc':>22}{'AUC':>22}")
    for row in read_grid_csv(out):
        print(f"{row['family']:<17}{row['method']:<12}{row['bacc']!r:>22}{row['auc']!r:>22}")
    log.info("grid evaluated in %.1f s", time.perf_counter() - t0)
    if args.figures:
        from . import plotting
        plotting.plot_noise_grid(reports, ensure_dir(args.figures) / "noise-grid.png")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("-q", "--quiet", action="store_true", help="no progress output")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = _Parser(prog="blotforensics",
                     description="Explainable detection and source attribution of synthetic "
                                 "Western blot images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-fixtures", parents=[common], help="write a synthetic fixture corpus")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--count", type=int, default=200, help="images per generator (default 200)")
    p.add_argument("--size", type=int, default=256, help="image side in pixels (default 256)")
    p.add_argument("--generators", nargs="+", choices=[g.value for g in ALL_GENERATORS],
                   help="subset of generators (default all five)")
    p.add_argument("--spec", type=Path, help="JSON list of fixture specs (overrides count/size/seed)")
    p.set_defaults(func=cmd_gen_fixtures)

    p = sub.add_parser("extract", parents=[common], help="extract one feature family to CSV")
    p.add_argument("--manifest", required=True, type=Path, help="dataset manifest JSON")
    p.add_argument("--out", required=True, type=Path, help="feature CSV")
    p.add_argument("--sources", nargs="+", help="restrict to these labels")
    p.add_argument("--maps", type=Path,
                   help="also write per-source average spectra and GLCMs (PGM, CSV, PNG) here")
    p.add_argument("--maps-count", type=int, default=100, help="images per source for --maps")
    feature_flags(p)
    p.set_defaults(func=cmd_extract)

    def data_flags(p, sources=True):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--manifest", type=Path, help="dataset manifest JSON")
        src.add_argument("--features", type=Path, help="feature CSV written by 'extract'")
        if sources:
            p.add_argument("--sources", nargs="+", help="restrict to these labels")

    def report_flags(p):
        p.add_argument("--out", type=Path, help="report JSON path")
        p.add_argument("--figures", type=Path, help="directory for PNG figures")

    p = sub.add_parser("train", parents=[common], help="fit one one-class model per source")
    data_flags(p)
    p.add_argument("--out-dir", required=True, type=Path, help="directory for model files")
    p.add_argument("--classifier", choices=["if", "ppca"], default="if",
                   help="one-class model (default if)")
    p.add_argument("--threshold", type=float, help="default unknown threshold stored with the models")
    feature_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attribute", parents=[common], help="attribute a questioned image")
    p.add_argument("image", type=Path, help="questioned image (PNG or TIFF)")
    p.add_argument("--model-dir", required=True, type=Path, help="directory written by 'train'")
    p.add_argument("--threshold", type=float, help="report 'unknown' when the best score is below this")
    p.add_argument("--top", type=int, default=5, help="number of explanatory features")
    feature_flags(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("eval-closed", parents=[common], help="closed-set random forest protocol")
    data_flags(p)
    report_flags(p)
    p.add_argument("--folds", type=int, default=2, help="cross-validation folds (default 2)")
    p.add_argument("--n-trees", type=int, default=100, help="random forest size (default 100)")
    p.add_argument("--shuffle-labels", action="store_true", help="chance-level control")
    p.add_argument("--resubstitution", action="store_true", help="train = test (diagnostic)")
    feature_flags(p)
    p.set_defaults(func=cmd_eval_closed)

    p = sub.add_parser("eval-open", parents=[common], help="open-set one-class protocol")
    data_flags(p, sources=False)
    report_flags(p)
    p.add_argument("--pristine-a", required=True, help="first pristine label")
    p.add_argument("--pristine-b", required=True, help="second pristine label")
    p.add_argument("--synthetic", nargs="+", help="synthetic labels (default: all others)")
    p.add_argument("--classifier", choices=["if", "ppca"], default="ppca",
                   help="one-class model (default ppca)")
    feature_flags(p)
    p.set_defaults(func=cmd_eval_open)

    p = sub.add_parser("eval-ovr", parents=[common], help="one-vs-rest attribution protocol")
    data_flags(p)
    report_flags(p)
    p.add_argument("--classifier", choices=["if", "ppca"], default="if",
                   help="one-class model (default if)")
    p.add_argument("--threshold", type=float,
                   help="report 'unknown' when the best score is below this; scores are "
                        "log-likelihoods (ppca) or negated anomaly scores in [-1, 0) (if)")
    feature_flags(p)
    p.set_defaults(func=cmd_eval_ovr)

    p = sub.add_parser("noise-grid", parents=[common],
                       help="one-vs-rest attribution over feature families x noise extractors")
    p.add_argument("--manifest", required=True, type=Path, help="dataset manifest JSON")
    p.add_argument("--sources", nargs="+", help="restrict to these labels")
    p.add_argument("--families", nargs="+", choices=[f.value for f in FeatureFamily],
                   help="feature families (default all four)")
    p.add_argument("--methods", nargs="+", choices=[m.value for m in NoiseMethod],
                   help="noise extractors (default all eight)")
    p.add_argument("--classifier", choices=["if", "ppca"], default="if",
                   help="one-class model (default if)")
    p.add_argument("--out-csv", required=True, type=Path, help="grid CSV, one row per cell")
    p.add_argument("--out", type=Path, help="JSON list of all cell reports")
    p.add_argument("--figures", type=Path, help="directory for the grid bar chart")
    feature_flags(p, with_family=False)
    p.set_defaults(func=cmd_noise_grid)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return int(args.func(args) or 0)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
