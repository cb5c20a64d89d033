"""Command-line interface: ``mlgspatial <subcommand> [options]``.

Every subcommand reads an optional INI config (see :mod:`mlgspatial.config`);
command-line flags override config values. Outputs are written atomically
into ``--out`` and depend only on the inputs, config and seed.
"""
import argparse
import hashlib
import logging
import os
import sys
import time
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from . import io
from ._rng import substream
from .basis import basis_matrix, generate_knots
from .config import load_config, parse_resolutions
from .design import build_design, uses_spectra
from .estimator import data_bbox
from .exceptions import MLGSpatialError
from .gibbs import PosteriorDraws, chain_diagnostics, run_chain
from .prediction import PredictionGrid, aggregate_raster, predict_grid
from .scoring import cross_validate, empirical_semivariogram, metrics_table
from .simulate import simulate, truth_record
from .spectra import fit_pca, project

log = logging.getLogger("mlgspatial")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(cfg, command, extra=None, timing=None):
    inputs = {k: {"path": os.path.basename(p), "sha256": _sha256(p)} for k, p in sorted(cfg.paths.items())}
    settings = asdict(cfg)
    for key in ("paths", "source", "out"):
        settings.pop(key)
    out = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": settings,
        "inputs": inputs,
    }
    if extra:
        out.update(extra)
    if cfg.record_timing and timing is not None:
        out["timing"] = timing
    return out


def _out(cfg, name):
    return os.path.join(cfg.out, name)


# ---------------------------------------------------------------------------
# data assembly


def load_sites(cfg, need_coeffs):
    """Sites table, with spectral coefficients attached when needed.

    Coefficients come from ``[data] coeffs`` if present, otherwise from a PCA
    of ``[data] spectra``.
    """
    sites = io.read_sites(cfg.path("sites"))
    if not need_coeffs:
        return sites
    if cfg.path("coeffs", required=False):
        ids, coeffs = io.read_coeffs(cfg.path("coeffs"))
    elif cfg.path("spectra", required=False):
        ids, wavelengths, spectra = io.read_spectra(cfg.path("spectra"))
        basis = fit_pca(spectra, cfg.n_components, wavelengths, cfg.min_explained)
        coeffs = project(spectra, basis)
    else:
        raise MLGSpatialError("spectral models need [data] coeffs or [data] spectra")
    return io.attach_coeffs(sites, ids, coeffs)


def spatial_basis(cfg, sites):
    if cfg.path("basis", required=False):
        return io.read_basis(cfg.path("basis"))
    bbox = cfg.bbox or data_bbox(sites.locations)
    return generate_knots(bbox, cfg.resolutions)


def _center(cfg, train):
    return tuple(train.locations.mean(axis=0)) if cfg.center_coords else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg, args):
    data = simulate(cfg.synthetic)
    s = data.sites
    io.write_sites(s, _out(cfg, "sites.csv"))
    io.write_coeffs(s.ids, s.coeffs, _out(cfg, "coeffs.csv"))
    io.write_spectra(s.ids, data.wavelengths, data.spectra, _out(cfg, "spectra.csv"))
    io.write_raster(data.raster, _out(cfg, "landuse.asc"))
    io.write_basis(data.basis, _out(cfg, "truth_basis.csv"))
    io.write_json(truth_record(data), _out(cfg, "truth.json"))
    io.write_json(
        {"command": "simulate", "version": __version__, "seed": cfg.synthetic.seed,
         "spec": cfg.synthetic.to_dict()},
        _out(cfg, "manifest.json"),
    )
    log.info("simulated %d sites (%d with y)", len(s), int(s.has_y.sum()))


def cmd_fit(cfg, args):
    sites = load_sites(cfg, uses_spectra(cfg.model))
    train = sites.subset(np.flatnonzero(sites.has_y))
    basis = spatial_basis(cfg, sites)
    designs = build_design(cfg.model, train, basis, center=_center(cfg, train), require_y=True)
    empty = int(np.sum(~basis_matrix(train.locations, basis).any(axis=1)))
    if empty:
        log.warning("%d training site(s) lie outside every basis kernel", empty)
    t0 = time.perf_counter()
    draws = run_chain(train.y, designs, cfg.hyper, cfg.sampler)
    elapsed = time.perf_counter() - t0
    log.info("chain finished in %.1f s (%d stored draws)", elapsed, len(draws))
    io.write_frame(draws.to_frame(), _out(cfg, "draws.csv"))
    io.write_frame(chain_diagnostics(draws), _out(cfg, "diagnostics.csv"))
    io.write_basis(basis, _out(cfg, "basis.csv"))
    extra = {
        "n_train": len(train),
        "labels": designs.labels,
        "acceptance": draws.acceptance,
        "center": _center(cfg, train),
    }
    timing = {"total_seconds": elapsed, **{k: float(v) for k, v in draws.timing.items()}}
    io.write_json(_manifest(cfg, "fit", extra, timing), _out(cfg, "manifest.json"))


def cmd_predict(cfg, args):
    draws = PosteriorDraws.from_csv(cfg.path("draws"))
    raster = io.read_raster(cfg.path("raster"))
    spectral = uses_spectra(cfg.model)
    sites = load_sites(cfg, spectral)
    train = sites.subset(np.flatnonzero(sites.has_y))
    basis = spatial_basis(cfg, sites)
    reference = None
    if spectral:
        reference = sites.subset(np.flatnonzero(np.all(np.isfinite(sites.coeffs), axis=1)))
    table = predict_grid(
        draws,
        PredictionGrid.from_raster(raster),
        reference,
        basis,
        cfg.model,
        substream(cfg.seed, "prediction-noise"),
        center=_center(cfg, train),
        level=cfg.level,
    )
    io.write_frame(table, _out(cfg, "predictions.csv"))
    io.write_json(_manifest(cfg, "predict", {"n_cells": len(table)}), _out(cfg, "manifest.json"))


def cmd_cv(cfg, args):
    need = any(uses_spectra(m) for m in cfg.models)
    sites = load_sites(cfg, need)
    basis = spatial_basis(cfg, sites)
    modes = ("known", "knn") if cfg.coeff_mode == "both" else (cfg.coeff_mode,)
    rows = {mode: [] for mode in modes}
    timing = {}
    for model in cfg.models:
        t0 = time.perf_counter()
        model_modes = modes if uses_spectra(model) else ("known",)
        res = cross_validate(
            model, sites, basis, cfg.hyper, cfg.sampler, cfg.k_folds, cfg.seed,
            model_modes, threads=cfg.threads, center_coords=cfg.center_coords,
        )
        for mode in modes:
            rows[mode].append(res[mode] if mode in res else res["known"])
        timing[f"model{model}_seconds"] = time.perf_counter() - t0
        log.info("model %d cross-validated in %.1f s", model, timing[f"model{model}_seconds"])
    for mode in modes:
        name = "metrics.csv" if mode == modes[0] else f"metrics_{mode}.csv"
        io.write_frame(metrics_table(rows[mode]), _out(cfg, name))
    io.write_json(_manifest(cfg, "cv", {"coeff_modes": list(modes)}, timing), _out(cfg, "manifest.json"))


def cmd_pca(cfg, args):
    ids, wavelengths, spectra = io.read_spectra(cfg.path("spectra"))
    basis = fit_pca(spectra, cfg.n_components, wavelengths, cfg.min_explained)
    io.write_spectral_basis(basis, _out(cfg, "spectral_basis.txt"))
    io.write_coeffs(ids, project(spectra, basis), _out(cfg, "coeffs.csv"))
    log.info("explained variance %.4f with K=%d", basis.explained_variance_ratio.sum(), cfg.n_components)


def cmd_semivariogram(cfg, args):
    sites = io.read_sites(cfg.path("sites"))
    lab = sites.subset(np.flatnonzero(sites.has_y))
    table = empirical_semivariogram(
        lab.locations, lab.y, cfg.n_bins, cfg.max_dist, lab.landuse if cfg.by_category else None
    )
    io.write_frame(table, _out(cfg, "semivariogram.csv"))


def cmd_aggregate(cfg, args):
    raster = io.read_raster(cfg.path("raster"))
    io.write_raster(aggregate_raster(raster, cfg.factor), _out(cfg, "landuse_coarse.asc"))


COMMANDS = {
    "simulate": (cmd_simulate, "draw a synthetic data set"),
    "fit": (cmd_fit, "run the Gibbs sampler and write posterior draws"),
    "predict": (cmd_predict, "posterior predictive summaries over a land-use raster"),
    "cv": (cmd_cv, "K-fold cross-validation metrics per model"),
    "pca": (cmd_pca, "PCA basis and coefficients for a spectra CSV"),
    "semivariogram": (cmd_semivariogram, "empirical semivariogram of site responses"),
    "aggregate": (cmd_aggregate, "modal aggregation of a land-use raster"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides [run] seed)")
    common.add_argument("--threads", type=int, help="worker threads for parallel folds")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--record-timing", action="store_true", default=None,
                        help="store wall-clock timings in the manifest (breaks byte-identical reruns)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="mlgspatial", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    parsers = {name: sub.add_parser(name, parents=[common], help=text, description=text)
               for name, (_, text) in COMMANDS.items()}

    p = parsers["simulate"]
    p.add_argument("--n-sites", type=int, help="number of sites with a response")
    p.add_argument("--n-reference", type=int, help="extra spectra-only sites")

    for name in ("fit", "predict", "cv", "pca", "semivariogram"):
        parsers[name].add_argument("--sites", metavar="CSV", help="sites CSV")
    for name in ("fit", "predict", "cv", "pca"):
        parsers[name].add_argument("--spectra", metavar="CSV", help="spectra CSV")
    for name in ("fit", "predict", "cv"):
        p = parsers[name]
        p.add_argument("--coeffs", metavar="CSV", help="spectral coefficient CSV")
        p.add_argument("--basis", metavar="CSV", help="knot table (lon, lat, R, resolution_id)")
        p.add_argument("--model", type=int, choices=range(1, 7), help="model variant")
        p.add_argument("--resolutions", help='knot grids, e.g. "3x2,10x7"')
    for name in ("fit", "cv"):
        parsers[name].add_argument("--n-iter", type=int)
        parsers[name].add_argument("--burn-in", type=int)
    parsers["cv"].add_argument("--k", type=int, dest="k_folds", help="number of folds")
    parsers["cv"].add_argument("--coeff-mode", choices=("known", "knn", "both"))
    parsers["cv"].add_argument("--models", help='comma-separated model list, e.g. "1,2,3,5"')
    parsers["predict"].add_argument("--draws", metavar="CSV", help="posterior draws from fit")
    for name in ("predict", "aggregate"):
        parsers[name].add_argument("--raster", metavar="ASC", help="land-use raster")
    parsers["pca"].add_argument("--k", type=int, dest="n_components", help="number of components")
    parsers["semivariogram"].add_argument("--bins", type=int, dest="n_bins", help="number of distance bins")
    parsers["aggregate"].add_argument("--factor", type=int, help="block size in fine cells")
    return parser


_PATH_FLAGS = ("sites", "spectra", "coeffs", "basis", "draws", "raster")


def resolve_config(args):
    cfg = load_config(args.config)
    for key in _PATH_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            if not os.path.exists(value):
                raise MLGSpatialError(f"--{key}: file {value} does not exist")
            cfg.paths[key] = os.path.abspath(value)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
        cfg.synthetic = replace(cfg.synthetic, seed=args.seed)
    for key in ("threads", "out", "record_timing", "model", "k_folds", "coeff_mode", "n_components",
                "n_bins", "factor"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "resolutions", None):
        cfg.resolutions = parse_resolutions(args.resolutions)
    if getattr(args, "models", None):
        cfg.models = tuple(int(m) for m in args.models.replace(",", " ").split())
    sampler = {k: getattr(args, k, None) for k in ("n_iter", "burn_in")}
    sampler = {k: v for k, v in sampler.items() if v is not None}
    if sampler:
        cfg.sampler = replace(cfg.sampler, **sampler)
    syn = {k: getattr(args, k, None) for k in ("n_sites", "n_reference")}
    syn = {k: v for k, v in syn.items() if v is not None}
    if syn:
        cfg.synthetic = replace(cfg.synthetic, **syn)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg.out, exist_ok=True)
        COMMANDS[args.command][0](cfg, args)
    except (MLGSpatialError, ValueError, OSError) as exc:
        print(f"mlgspatial {args.command}: error: {exc}", file=sys.stderr)
        print(f"run 'mlgspatial {args.command} --help' for the flag reference", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
