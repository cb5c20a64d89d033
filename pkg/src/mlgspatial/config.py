"""INI run configuration.

Example::

    [data]
    sites = sites.csv
    coeffs = coeffs.csv

    [model]
    model = 5

    [basis]
    resolutions = 3x2, 10x7

    [sampler]
    n_iter = 5000
    burn_in = 1000

    [run]
    seed = 42

Relative paths are resolved against the config file's directory.
"""
import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .basis import DEFAULT_RESOLUTIONS
from .design import Hyperparams, check_model
from .exceptions import ParameterError
from .gibbs import CMLG_UPDATES, SamplerConfig
from .simulate import SyntheticSpec

DATA_KEYS = ("sites", "coeffs", "spectra", "raster", "draws", "basis", "spectral_basis")


def parse_resolutions(text):
    """``"3x2, 10x7"`` -> ``((3, 2), (10, 7))``."""
    out = []
    for item in str(text).split(","):
        item = item.strip().lower()
        if not item:
            continue
        try:
            nx, ny = (int(v) for v in item.split("x"))
        except ValueError:
            raise ParameterError(f"bad resolution {item!r}; expected NXxNY") from None
        out.append((nx, ny))
    if not out:
        raise ParameterError("at least one resolution is required")
    return tuple(out)


def parse_floats(text, n=None):
    values = tuple(float(v) for v in str(text).replace(",", " ").split())
    if n is not None and len(values) != n:
        raise ParameterError(f"expected {n} numbers, got {text!r}")
    return values


@dataclass
class RunConfig:
    model: int = 5
    center_coords: bool = False
    bbox: tuple = None
    resolutions: tuple = DEFAULT_RESOLUTIONS
    n_components: int = 9
    min_explained: float = 0.99
    hyper: Hyperparams = field(default_factory=Hyperparams)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    k_folds: int = 5
    coeff_mode: str = "known"
    models: tuple = (1, 2, 3, 4, 5, 6)
    n_bins: int = 15
    max_dist: float = None
    by_category: bool = True
    factor: int = 2
    level: float = 0.95
    seed: int = 0
    threads: int = 1
    out: str = "out"
    record_timing: bool = False
    paths: dict = field(default_factory=dict)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    source: str = None

    def path(self, key, required=True):
        p = self.paths.get(key)
        if p is None and required:
            raise ParameterError(f"config needs [data] {key} = PATH")
        return p

    def with_seed(self, seed):
        return replace(self, seed=int(seed), sampler=replace(self.sampler, seed=int(seed)))


def _coerce(default, text):
    if isinstance(default, bool):
        return str(text).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        if default and isinstance(default[0], tuple):
            return parse_resolutions(text)
        return parse_floats(text)
    return text


def _section(parser, name):
    return dict(parser.items(name)) if parser.has_section(name) else {}


def _dataclass_from(cls, values, where):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    defaults = cls()
    for key, text in values.items():
        if key not in known:
            raise ParameterError(f"{where}: unknown key {key!r}")
        try:
            kwargs[key] = _coerce(getattr(defaults, key), text)
        except ValueError as exc:
            raise ParameterError(f"{where}: bad value for {key}: {exc}") from None
    return cls(**kwargs)


def load_config(path=None, check_files=True):
    """Parse an INI file into a :class:`RunConfig` (defaults when `path` is None)."""
    parser = configparser.ConfigParser(interpolation=None)
    base = os.getcwd()
    if path is not None:
        if not os.path.exists(path):
            raise ParameterError(f"config file {path} not found")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ParameterError(f"{path}: {exc}") from None
        base = os.path.dirname(os.path.abspath(path))
    where = path or "<defaults>"

    paths = {}
    for key, value in _section(parser, "data").items():
        if key not in DATA_KEYS:
            raise ParameterError(f"{where} [data]: unknown key {key!r}")
        resolved = os.path.normpath(os.path.join(base, value))
        if check_files and not os.path.exists(resolved):
            raise ParameterError(f"{where} [data]: {key} file {resolved} does not exist")
        paths[key] = resolved

    cfg = RunConfig(paths=paths, source=path)
    try:
        model = _section(parser, "model")
        cfg.model = check_model(int(model.pop("model", cfg.model)))
        cfg.center_coords = _coerce(False, model.pop("center_coords", "false"))
        if "models" in model:
            cfg.models = tuple(check_model(int(m)) for m in model.pop("models").replace(",", " ").split())
        _no_extra(model, where, "model")

        basis = _section(parser, "basis")
        if "bbox" in basis:
            cfg.bbox = parse_floats(basis.pop("bbox"), 4)
        if "resolutions" in basis:
            cfg.resolutions = parse_resolutions(basis.pop("resolutions"))
        _no_extra(basis, where, "basis")

        pca = _section(parser, "pca")
        cfg.n_components = int(pca.pop("n_components", cfg.n_components))
        cfg.min_explained = float(pca.pop("min_explained", cfg.min_explained))
        _no_extra(pca, where, "pca")

        cfg.hyper = _dataclass_from(Hyperparams, _section(parser, "hyper"), f"{where} [hyper]")

        sampler = _section(parser, "sampler")
        if sampler.get("cmlg_update", "exact") not in CMLG_UPDATES:
            raise ParameterError(f"cmlg_update must be one of {CMLG_UPDATES}")
        sampler_kwargs = {}
        for key in ("n_iter", "burn_in", "thin"):
            if key in sampler:
                sampler_kwargs[key] = int(sampler.pop(key))
        if "cmlg_update" in sampler:
            sampler_kwargs["cmlg_update"] = sampler.pop("cmlg_update")
        if "joint_blocks" in sampler:
            sampler_kwargs["joint_blocks"] = _coerce(True, sampler.pop("joint_blocks"))
        _no_extra(sampler, where, "sampler")

        cv = _section(parser, "cv")
        cfg.k_folds = int(cv.pop("k", cfg.k_folds))
        cfg.coeff_mode = cv.pop("coeff_mode", cfg.coeff_mode)
        if cfg.coeff_mode not in ("known", "knn", "both"):
            raise ParameterError("coeff_mode must be known, knn or both")
        _no_extra(cv, where, "cv")

        sv = _section(parser, "semivariogram")
        cfg.n_bins = int(sv.pop("n_bins", cfg.n_bins))
        if "max_dist" in sv:
            cfg.max_dist = float(sv.pop("max_dist"))
        cfg.by_category = _coerce(True, sv.pop("by_category", "true"))
        _no_extra(sv, where, "semivariogram")

        pred = _section(parser, "predict")
        cfg.level = float(pred.pop("level", cfg.level))
        _no_extra(pred, where, "predict")

        agg = _section(parser, "aggregate")
        cfg.factor = int(agg.pop("factor", cfg.factor))
        _no_extra(agg, where, "aggregate")

        run = _section(parser, "run")
        cfg.seed = int(run.pop("seed", cfg.seed))
        cfg.threads = int(run.pop("threads", cfg.threads))
        cfg.record_timing = _coerce(False, run.pop("record_timing", "false"))
        if "out" in run:
            cfg.out = os.path.normpath(os.path.join(base, run.pop("out")))
        _no_extra(run, where, "run")

        cfg.sampler = SamplerConfig(seed=cfg.seed, **sampler_kwargs)
        syn = _section(parser, "simulate")
        syn.setdefault("seed", str(cfg.seed))
        cfg.synthetic = _dataclass_from(SyntheticSpec, syn, f"{where} [simulate]")
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"{where}: {exc}") from None
    return cfg


def _no_extra(values, where, section):
    if values:
        raise ParameterError(f"{where} [{section}]: unknown key(s) {', '.join(sorted(values))}")
