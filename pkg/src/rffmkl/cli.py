"""Command-line entry point: ``rffmkl {synth,train,bench,select}``.

Settings are resolved as defaults < JSON config file (--config) < command-line
flags.  Every run writes the fully resolved ``config.json`` to its output
directory; rerunning with that file reproduces the run byte for byte.  On
failure an ``error.json`` record is written (when possible), the same record
goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import LinearGroupModel, save_linear_model
from .dataset import (
    SYNTH_PRESETS,
    GroupedDataset,
    GroupManifest,
    SynthSpec,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    random_split_indices,
    save_csv,
    synth_grouped,
)
from .evaluation import (
    DEFAULT_C_CANDIDATES,
    TrialSummary,
    cv_select,
    format_table,
    metrics_report,
    repeated_trials,
    trial_seeds,
)
from .exceptions import ConfigurationError
from .methods import METHOD_NAMES, make_method
from .mkl import SolverConfig, save_model
from .rff import DEFAULT_MULTIPLIERS, BandwidthSchedule
from .selection import (
    FEATURE_SIGMAS,
    curve_csv,
    rank_by_weights,
    ranking_csv,
    top_k_accuracy_curve,
)

logger = logging.getLogger("rffmkl")

EXIT_FAILURE = 1
EXIT_CONFIG = 2


@dataclass
class RunConfig:
    """Everything needed to reproduce a run.

    Exactly one data source: ``data`` + ``manifest`` (CSV on disk) or
    ``synth`` (a preset name or an inline synthetic spec).  ``fixed_C``
    disables the inner cross-validation over ``C_candidates``.
    """

    data: str | None = None
    manifest: str | None = None
    synth: object = None
    method: str = "mkl-l21"
    methods: list | None = None
    group: str | None = None
    fourier_size: int = 2000
    multipliers: list = dataclasses.field(default_factory=lambda: list(DEFAULT_MULTIPLIERS))
    C_candidates: list = dataclasses.field(default_factory=lambda: list(DEFAULT_C_CANDIDATES))
    fixed_C: float | None = None
    n_trials: int = 20
    train_fraction: float = 2 / 3
    cv_folds: int = 5
    seed: int = 0
    out: str = "run"
    standardize: list | None = None
    max_outer_iters: int = 100
    outer_tol: float = 1e-6
    inner_tol: float = 1e-7
    grid_step: float = 0.1
    grid_inner_folds: int = 10
    feature_sigmas: list = dataclasses.field(default_factory=lambda: list(FEATURE_SIGMAS))
    k_values: list | None = None
    curve_trials: int = 20

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known - {"version", "command"}
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self, command: str):
        has_csv = self.data is not None or self.manifest is not None
        if command != "synth":
            if has_csv == (self.synth is not None):
                raise ConfigurationError("give exactly one data source: --data/--manifest or "
                                         "--preset/synth")
            if has_csv and (self.data is None or self.manifest is None):
                raise ConfigurationError("--data and --manifest must be given together")
        if command == "train":
            self._method_known(self.method)
        if command == "bench":
            if not self.methods:
                raise ConfigurationError("bench needs at least one method")
            for m in self.methods:
                self._method_known(m)
        if self.fourier_size < 1:
            raise ConfigurationError(f"D must be at least 1, got {self.fourier_size}")
        if self.n_trials < 1 or self.curve_trials < 1:
            raise ConfigurationError("trial counts must be at least 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError("train_fraction must lie in (0, 1)")
        if self.fixed_C is not None and not self.fixed_C > 0:
            raise ConfigurationError("C must be positive")
        if not self.C_candidates or any(not c > 0 for c in self.C_candidates):
            raise ConfigurationError("C candidates must be a non-empty list of positive values")

    @staticmethod
    def _method_known(name: str):
        if name not in METHOD_NAMES and not name.startswith("svm:"):
            raise ConfigurationError(f"unknown method {name!r}; choose from {METHOD_NAMES}")

    def schedule(self) -> BandwidthSchedule:
        return BandwidthSchedule(tuple(float(m) for m in self.multipliers))

    def solver(self) -> SolverConfig:
        return SolverConfig(1.0, self.max_outer_iters, self.outer_tol, self.inner_tol)

    def method_handle(self, name: str):
        return make_method(name, self.group, self.schedule(), self.fourier_size, self.solver(),
                           self.grid_step, self.grid_inner_folds,
                           1.0 if self.fixed_C is None else self.fixed_C)


# ----------------------------------------------------------------------------
# helpers


def _clean(obj):
    """JSON-safe copy: NaN/inf -> None, numpy scalars/arrays -> Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _synth_spec(synth) -> SynthSpec:
    if isinstance(synth, str):
        if synth not in SYNTH_PRESETS:
            raise ConfigurationError(f"unknown preset {synth!r}; have {sorted(SYNTH_PRESETS)}")
        return SYNTH_PRESETS[synth]
    if isinstance(synth, dict):
        return SynthSpec.from_dict(synth)
    raise ConfigurationError("synth must be a preset name or a spec object")


def load_data(cfg: RunConfig):
    """(dataset, groups to standardize)."""
    if cfg.synth is not None:
        spec = _synth_spec(cfg.synth)
        data = synth_grouped(spec, cfg.seed)
        default_std = spec.standardize
    else:
        manifest = GroupManifest.load(cfg.manifest)
        data = load_csv(cfg.data, manifest)
        default_std = manifest.standardize
    std = tuple(default_std if cfg.standardize is None else cfg.standardize)
    return data, std


def _prepare_out(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = dict(cfg.to_dict(), command=command, version=__version__)
    write_json(out / "config.json", snapshot)
    return out


# ----------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> dict:
    spec = _synth_spec(cfg.synth if cfg.synth is not None else "groups8")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data = synth_grouped(spec, cfg.seed)
    save_csv(data, out / "data.csv", out / "manifest.json", spec.standardize)
    write_json(out / "synth.json", dict(spec.to_dict(), seed=cfg.seed))
    return {"data": str(out / "data.csv"), "manifest": str(out / "manifest.json")}


def _standardizer_record(params) -> dict:
    return {name: {"mean": params.means[name], "std": params.stds[name]}
            for name in sorted(params.means)}


def train_model(data: GroupedDataset, cfg: RunConfig, standardize=()):
    """Split -> standardize -> (CV) -> fit -> test for ``cfg.method``.

    Returns (model, trace, report dict, MetricsReport, standardization params).
    """
    seeds = trial_seeds(cfg.seed, 0)
    tr, te = random_split_indices(data.labels, cfg.train_fraction, seeds["split"])
    raw_train = data.subset(tr)
    std_params = fit_standardizer(raw_train, standardize)
    train = apply_standardizer(std_params, raw_train)
    test = apply_standardizer(std_params, data.subset(te))

    method = cfg.method_handle(cfg.method)
    cs = [cfg.fixed_C] if cfg.fixed_C is not None else sorted(float(c) for c in cfg.C_candidates)
    candidates = method.candidates(cs)
    cv_acc = None
    if len(candidates) == 1:
        params = candidates[0]
    else:
        def restack(rows):
            p = fit_standardizer(raw_train.subset(rows), standardize)
            return method.kernel_stack(apply_standardizer(p, raw_train), seeds["bank"])

        stack = method.kernel_stack(train, seeds["bank"])
        params, cv_acc = cv_select(method, stack, np.arange(train.n_samples), train.labels,
                                   candidates, cfg.cv_folds, seeds["cv"],
                                   restack if standardize else None)
    model, trace = method.fit_explicit(train, params, seeds["bank"], seeds["cv"])
    scores = model.decision_scores(method.view(test))
    metrics = metrics_report(test.labels, scores)
    report = {
        "method": method.name,
        "params": dict(params),
        "cv_accuracy": cv_acc,
        "candidates": candidates,
        "n_train": int(len(tr)),
        "n_test": int(len(te)),
        "test": metrics.to_dict(),
        "train_accuracy": float(np.mean(model.predict(method.view(train)) == train.labels)),
        "beta": model.beta,
    }
    if trace is not None:
        report["solver"] = {"iterations": trace.iterations, "status": trace.status,
                            "final_objective": trace.objectives[-1],
                            "monotone": trace.is_monotone()}
    return model, trace, report, metrics, std_params


def cmd_train(cfg: RunConfig) -> dict:
    from .plotting import plot_kernel_weights

    data, standardize = load_data(cfg)
    out = _prepare_out(cfg, "train")
    model, trace, report, metrics, std_params = train_model(data, cfg, standardize)
    extra = {"method": report["method"], "standardizer": _clean(_standardizer_record(std_params))}
    if isinstance(model, LinearGroupModel):
        save_linear_model(model, out / "model.npz", extra)
        (out / "trace.csv").write_text("iteration,objective\n", encoding="utf-8")
        beta, names = model.beta.reshape(-1, 1), list(model.group_names)
    else:
        save_model(model, out / "model.npz", extra)
        (out / "trace.csv").write_text(trace.to_csv(), encoding="utf-8")
        beta, names = model.beta, list(model.bank.group_names)
    write_json(out / "report.json", report)
    one = TrialSummary(report["method"], [metrics], [report["params"]])
    (out / "table.txt").write_text(format_table([one]), encoding="utf-8")
    plot_kernel_weights(beta, names, out / "kernel_weights.png",
                        f"{report['method']} kernel weights")
    return {"out": str(out), "report": report}


def cmd_bench(cfg: RunConfig) -> dict:
    from .plotting import plot_bench

    data, standardize = load_data(cfg)
    out = _prepare_out(cfg, "bench")
    summaries, failures = [], []
    for name in cfg.methods:
        try:
            summaries.append(repeated_trials(
                data, cfg.method_handle(name), cfg.n_trials, cfg.train_fraction, cfg.seed,
                cfg.C_candidates, cfg.fixed_C, cfg.cv_folds, standardize))
        except Exception as exc:  # recorded; survivors still get a table
            logger.error("method %s failed: %s", name, exc)
            failures.append({"method": name, "error": type(exc).__name__, "message": str(exc)})
    write_json(out / "report.json", {"summaries": [s.to_dict() for s in summaries],
                                     "failures": failures})
    (out / "table.txt").write_text(format_table(summaries), encoding="utf-8")
    if summaries:
        plot_bench(summaries, out / "bench_acc.png")
    if not summaries:
        raise ConfigurationError("every method failed; see report.json")
    return {"out": str(out), "summaries": summaries, "failures": failures}


def cmd_select(cfg: RunConfig) -> dict:
    from .plotting import plot_accuracy_curve, plot_kernel_weights

    data, standardize = load_data(cfg)
    if standardize:
        # whole-dataset scaling; ranking is an exploratory, not a held-out, analysis
        data = apply_standardizer(fit_standardizer(data, standardize), data)
    out = _prepare_out(cfg, "select")
    C = 1.0 if cfg.fixed_C is None else cfg.fixed_C
    ranking = rank_by_weights(data, tuple(cfg.feature_sigmas), C, cfg.n_trials,
                              cfg.fourier_size, cfg.seed, cfg.train_fraction, cfg.solver())
    curve = top_k_accuracy_curve(data, ranking, cfg.k_values, C, cfg.curve_trials, cfg.seed,
                                 cfg.train_fraction, cfg.inner_tol)
    (out / "ranking.csv").write_text(ranking_csv(ranking), encoding="utf-8")
    (out / "curve.csv").write_text(curve_csv(curve), encoding="utf-8")
    best = max(curve, key=lambda pt: pt.mean_acc)
    write_json(out / "report.json", {
        "ranking": [{"rank": r, "feature": n, "index": i, "mean_weight": w}
                    for r, n, i, w in ranking.rows()],
        "curve": [dataclasses.asdict(pt) for pt in curve],
        "best_k": best.k,
    })
    order = np.argsort(ranking.indices)
    plot_kernel_weights(ranking.weights[order].reshape(-1, 1), list(ranking.names),
                        out / "feature_weights.png",
                        "Mean L21 weight per feature")
    plot_accuracy_curve(curve, out / "accuracy_curve.png")
    return {"out": str(out), "ranking": ranking, "curve": curve}


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "bench": cmd_bench, "select": cmd_select}


# ----------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rffmkl", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="CSV file")
    data.add_argument("--manifest", help="JSON group manifest for --data")
    data.add_argument("--preset", choices=sorted(SYNTH_PRESETS),
                      help="use a synthetic preset instead of --data")
    data.add_argument("--d-fourier", dest="fourier_size", type=int,
                      help="Fourier features per kernel, D (default 2000)")
    data.add_argument("--c", dest="fixed_C", type=float, help="fixed C; skips inner CV")
    data.add_argument("--c-candidates", dest="C_candidates", type=_floats,
                      help="comma-separated C values for inner CV")
    data.add_argument("--multipliers", type=_floats,
                      help="comma-separated bandwidth multipliers of sqrt(dim)")
    data.add_argument("--trials", dest="n_trials", type=int, help="number of random splits")
    data.add_argument("--train-fraction", type=float)
    data.add_argument("--standardize", type=lambda s: [v for v in s.split(",") if v],
                      help="comma-separated groups to z-score (overrides the manifest)")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--preset", choices=sorted(SYNTH_PRESETS))

    p = sub.add_parser("train", parents=[common, data], help="train and test one method")
    p.add_argument("--method", help=f"one of {', '.join(METHOD_NAMES)} or svm:<group>")
    p.add_argument("--group", help="group for svm-single")

    p = sub.add_parser("bench", parents=[common, data], help="compare methods over trials")
    p.add_argument("--methods", type=lambda s: [v for v in s.split(",") if v],
                   help="comma-separated method names")
    p.add_argument("--method", help="single method (same as --methods NAME)")
    p.add_argument("--group", help="group for svm-single")

    p = sub.add_parser("select", parents=[common, data], help="rank features by L21 weight")
    p.add_argument("--k-values", type=_ints, help="comma-separated k for the accuracy curve")
    p.add_argument("--curve-trials", type=int)
    p.add_argument("--feature-sigmas", type=_floats)
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "preset"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.config}: invalid JSON: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigurationError(f"{args.config}: expected a JSON object")
    if args.command == "synth" and "group_dims" in base:
        base = {"synth": base}  # a bare synthetic spec
    for key, value in vars(args).items():
        if key in _NOT_CONFIG or value is None:
            continue
        base[key] = value
    if getattr(args, "preset", None):
        base["synth"] = args.preset
        base.pop("data", None)
        base.pop("manifest", None)
    elif getattr(args, "data", None) is not None:
        base["synth"] = None
    if args.command == "bench" and getattr(args, "method", None) and not base.get("methods"):
        base["methods"] = [args.method]
    cfg = RunConfig.from_dict(base)
    cfg.validate(args.command)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else None  # known even if the config is invalid
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        COMMANDS[args.command](cfg)
        return 0
    except Exception as exc:  # report every failure as a machine-readable record
        record = {
            "command": args.command,
            "error": type(exc).__name__,
            "message": str(exc),
            "trial": getattr(exc, "trial", None),
        }
        if logger.isEnabledFor(logging.INFO):
            record["traceback"] = traceback.format_exc()
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        if out is not None:
            try:
                out.mkdir(parents=True, exist_ok=True)
                write_json(out / "error.json", record)
            except OSError:
                pass
        return EXIT_CONFIG if isinstance(exc, ConfigurationError) else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
