"""Command-line entry point: gen | train | sweep | gradcheck | curves | eval.

Configuration comes from an optional JSON file plus command-line flags;
flags win. Every artifact embeds the fully resolved configuration and seed
so any run can be replayed byte-for-byte. The output directory can be
overridden with the AWAM_OUT_DIR environment variable.

Exit codes: 0 success, 2 configuration error, 3 divergence,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.special import expit

from .basis import eval_coordinate, fit_basis, transform_batch
from .bilevel import DivergenceError, TrainConfig, train
from .bundle import ModelBundle
from .datagen import (
    Dataset,
    corrupt_features,
    corrupt_labels,
    gen_classification,
    gen_regression,
    inject_outliers,
    load_csv,
    make_imbalanced,
    read_dataset_csv,
    split,
    write_dataset_csv,
)
from .gradcheck import check_meta_gradient
from .metrics import RunMetrics, accuracy, asp, macro_f1, mse, weight_audit
from .model import loss_and_dmargin, predict_batch, predict_label, selected_set
from .weightnet import v_forward_batch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Resolved experiment settings: generator + optimizer + outputs."""

    task: str = "regression"
    n: int = 200
    p: int = 100
    noise: str = "B"            # regression train-noise kind
    r1: float = 0.0             # label flips (classification) / outlier rate (regression)
    r2: float | None = None     # imbalance factor (classification)
    r3: float = 0.0             # feature-noise rate
    outlier_mean: float = 100.0
    outlier_var: float = 100.0
    split_ratios: tuple = (3, 1, 1)
    d: int = 6
    basis: str = "bspline_cubic"
    T: int = 3000
    b: int | None = None        # None: min(64, n_train, n_meta)
    eta_beta0: float = 0.1
    eta_theta0: float = 0.01
    c1: float | None = None
    c2: float | None = None
    lam: float = 1e-3
    tau: list | None = None
    eps_norm: float = 1e-8
    prox: bool = False
    frozen_v: bool = False
    H: int = 100
    kappa_select: float = 1e-2
    seed: int = 0
    repeats: int = 5
    lambda_grid: list | None = None   # None: the standard 1e-6 .. 1 decade grid
    log_every: int = 10
    workers: int = 1

    @classmethod
    def load(cls, config_path, overrides: dict, base: dict | None = None) -> "ExperimentConfig":
        """Layer base dict < config file < non-None overrides; reject unknown keys."""
        known = {f.name for f in fields(cls)}
        doc = dict(base) if base else {}
        if config_path is not None:
            with open(config_path) as fh:
                file_doc = json.load(fh)
            doc.update(file_doc)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "split_ratios" in doc:
            doc["split_ratios"] = tuple(doc["split_ratios"])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"task must be regression|classification, got {self.task!r}")
        if self.noise not in ("gauss", "A", "B", "C"):
            raise ConfigError(f"noise must be one of gauss|A|B|C, got {self.noise!r}")
        if self.basis not in ("bspline_cubic", "trig_orthonormal"):
            raise ConfigError(f"unknown basis: {self.basis!r}")
        if not (0.0 <= self.r1 <= 1.0) or not (0.0 <= self.r3 <= 1.0):
            raise ConfigError("corruption rates must be in [0, 1]")
        if self.r2 is not None and not (0.0 < self.r2 < 1.0):
            raise ConfigError("imbalance factor r2 must lie in (0, 1)")
        if self.n < 5 or self.p < 1 or self.d < 1 or self.T < 0:
            raise ConfigError("n, p, d must be positive and T >= 0")
        if len(self.split_ratios) != 3 or any(r <= 0 for r in self.split_ratios):
            raise ConfigError("split_ratios must be three positive numbers")
        if self.lam < 0 or self.eta_beta0 <= 0 or self.eta_theta0 <= 0:
            raise ConfigError("lambda must be >= 0 and step sizes > 0")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.lambda_grid is not None and len(self.lambda_grid) == 0:
            raise ConfigError("lambda_grid must not be empty")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["split_ratios"] = list(self.split_ratios)
        return doc


def generate_experiment_data(cfg: ExperimentConfig, seed: int):
    """Generator + corruption + split pipeline; corruption touches train only.

    Returns (train, meta, test). The meta portion is always drawn from
    unflagged samples.
    """
    rng = np.random.default_rng(seed)
    if cfg.task == "regression":
        pool = gen_regression(cfg.n, cfg.p, cfg.noise, seed=seed)
        tr, me, te = split(pool, cfg.split_ratios, rng, clean_meta=True)
        if cfg.r1 > 0:
            tr = inject_outliers(tr, cfg.r1, cfg.outlier_mean, cfg.outlier_var, rng)
    else:
        pool = gen_classification(cfg.n, cfg.p, seed=seed)
        tr, me, te = split(pool, cfg.split_ratios, rng, clean_meta=True)
        if cfg.r2 is not None:
            tr = make_imbalanced(tr, cfg.r2, rng)
        if cfg.r1 > 0:
            tr = corrupt_labels(tr, cfg.r1, rng)
    if cfg.r3 > 0:
        tr = corrupt_features(tr, cfg.r3, rng)
    return tr, me, te


def _train_config(cfg: ExperimentConfig, n_train: int, n_meta: int, seed: int,
                  lam: float | None = None) -> TrainConfig:
    b = cfg.b if cfg.b is not None else min(64, n_train, n_meta)
    return TrainConfig(
        task=cfg.task,
        T=cfg.T,
        b=b,
        eta_beta0=cfg.eta_beta0,
        eta_theta0=cfg.eta_theta0,
        c1=cfg.c1,
        c2=cfg.c2,
        lam=cfg.lam if lam is None else lam,
        tau=np.asarray(cfg.tau, dtype=float) if cfg.tau is not None else None,
        eps_norm=cfg.eps_norm,
        prox_mode=cfg.prox,
        frozen_v=cfg.frozen_v,
        seed=seed,
        H=cfg.H,
        log_every=cfg.log_every,
    )


def evaluate_run(cfg: ExperimentConfig, spec, beta, theta, tr: Dataset,
                 te: Dataset, frozen: bool, wall_time: float | None = None,
                 true_support=None) -> RunMetrics:
    """Test-set metrics plus the train-set weight audit for one trained model."""
    psi_te = transform_batch(spec, te.X)
    margins = predict_batch(beta, psi_te)
    m = RunMetrics(wall_time=wall_time)
    if cfg.task == "regression":
        m.mse_vs_labels = mse(margins, te.y)
        if te.f_star is not None:
            m.mse_vs_fstar = mse(margins, te.f_star)
    else:
        labels = predict_label(margins)
        m.accuracy = accuracy(labels, te.y)
        m.macro_f1 = macro_f1(labels, te.y)
        m.mse_vs_labels = mse(expit(margins), te.y)  # Brier-style residual
    sel = selected_set(beta, cfg.kappa_select)
    m.selected = sorted(sel)
    if true_support:
        m.asp, m.false_selection_rate = asp([sel], true_support, p=spec.p)
    losses_tr, _ = loss_and_dmargin(
        cfg.task, tr.y, predict_batch(beta, transform_batch(spec, tr.X)))
    if frozen:
        m.mean_weight_clean = 1.0
        m.mean_weight_corrupt = 1.0 if tr.corrupted.any() else None
    else:
        m.mean_weight_clean, m.mean_weight_corrupt = weight_audit(
            theta, losses_tr, tr.corrupted)
    return m


def _out_dir(args) -> Path:
    out = os.environ.get("AWAM_OUT_DIR", args.out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_gen(args) -> int:
    cfg = ExperimentConfig.load(args.config, _overrides(args))
    out = _out_dir(args)
    tr, me, te = generate_experiment_data(cfg, cfg.seed)
    write_dataset_csv(tr, out / "train.csv")
    write_dataset_csv(me, out / "meta.csv")
    write_dataset_csv(te, out / "test.csv")
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "sizes": {"train": tr.n, "meta": me.n, "test": te.n},
        "true_support": sorted(tr.true_support) if tr.true_support else None,
        "train_corrupted": int(tr.corrupted.sum()),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {tr.n}/{me.n}/{te.n} samples to {out}")
    return EXIT_OK


def _load_experiment_dir(data_dir: Path):
    with open(data_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    task = manifest["config"]["task"]
    support = manifest.get("true_support")
    support = frozenset(support) if support else None
    tr = read_dataset_csv(data_dir / "train.csv", task, support)
    me = read_dataset_csv(data_dir / "meta.csv", task, support)
    te = read_dataset_csv(data_dir / "test.csv", task, support)
    return manifest, tr, me, te


def cmd_train(args) -> int:
    manifest, tr, me, te = _load_experiment_dir(Path(args.data))
    cfg = ExperimentConfig.load(args.config, _overrides(args), base=manifest["config"])
    out = _out_dir(args)

    spec = fit_basis(tr.X, d=cfg.d, kind=cfg.basis)
    tcfg = _train_config(cfg, tr.n, me.n, cfg.seed)
    budget = tcfg.penalty_decay_budget(tr.p)
    if budget > 1.0:
        print(f"note: lambda*max(tau)*T = {budget:.3g} > 1; outside the decay "
              "regime the lower-level convergence guarantee assumes")
    t0 = time.perf_counter()
    try:
        beta, theta, history = train(tcfg, tr, me, spec)
    except DivergenceError as err:
        err.history.write_csv(out / "history.csv")
        print(f"diverged at iteration {err.iteration}; history written", file=sys.stderr)
        return EXIT_DIVERGED
    wall = time.perf_counter() - t0

    history.write_csv(out / "history.csv")
    bundle = ModelBundle(task=cfg.task, spec=spec, beta=beta, theta=theta,
                         config=cfg.to_dict())
    bundle.save(out / "bundle.json")
    metrics = evaluate_run(cfg, spec, beta, theta, tr, te, cfg.frozen_v,
                           wall_time=wall, true_support=tr.true_support)
    # metrics.json stays byte-identical across replays: wall time lives in
    # the history CSV and the sweep table instead
    with open(out / "metrics.json", "w") as fh:
        json.dump({"config": cfg.to_dict(),
                   "metrics": metrics.to_dict(include_wall_time=False)},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"trained in {wall:.1f}s; artifacts in {out}")
    return EXIT_OK


SWEEP_COLUMNS = [
    "row", "lambda", "seed", "status", "mse_vs_labels", "mse_vs_fstar",
    "accuracy", "macro_f1", "asp", "fsr", "mean_weight_clean",
    "mean_weight_corrupt", "wall_time_s",
]


def _sweep_worker(payload: dict) -> dict:
    cfg = ExperimentConfig(**payload["config"])
    cfg.split_ratios = tuple(cfg.split_ratios)
    lam, seed = payload["lam"], payload["seed"]
    row = {"row": "run", "lambda": lam, "seed": seed}
    try:
        t0 = time.perf_counter()
        tr, me, te = generate_experiment_data(cfg, seed)
        spec = fit_basis(tr.X, d=cfg.d, kind=cfg.basis)
        tcfg = _train_config(cfg, tr.n, me.n, seed, lam=lam)
        beta, theta, _ = train(tcfg, tr, me, spec)
        m = evaluate_run(cfg, spec, beta, theta, tr, te, cfg.frozen_v,
                         wall_time=time.perf_counter() - t0,
                         true_support=tr.true_support)
        row.update({
            "status": "ok",
            "mse_vs_labels": m.mse_vs_labels,
            "mse_vs_fstar": m.mse_vs_fstar,
            "accuracy": m.accuracy,
            "macro_f1": m.macro_f1,
            "asp": m.asp,
            "fsr": m.false_selection_rate,
            "mean_weight_clean": m.mean_weight_clean,
            "mean_weight_corrupt": m.mean_weight_corrupt,
            "wall_time_s": m.wall_time,
        })
    except Exception as err:  # failed runs are recorded, the sweep continues
        row["status"] = f"error: {type(err).__name__}: {err}"
    return row


METRIC_COLUMNS = ["mse_vs_labels", "mse_vs_fstar", "accuracy", "macro_f1",
                  "asp", "fsr", "mean_weight_clean", "mean_weight_corrupt"]


def summarize_sweep_rows(rows: list[dict]) -> list[dict]:
    """One mean +/- std summary row per lambda over its successful runs."""
    summaries = []
    for lam in sorted({r["lambda"] for r in rows}):
        ok = [r for r in rows if r["lambda"] == lam and r["status"] == "ok"]
        summary = {"row": "summary", "lambda": lam, "seed": "",
                   "status": f"{len(ok)} ok"}
        for col in METRIC_COLUMNS:
            vals = [r[col] for r in ok if r.get(col) is not None]
            if vals:
                summary[col] = float(np.mean(vals))
                summary[col + "_std"] = float(np.std(vals))
        summaries.append(summary)
    return summaries


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config, _overrides(args))
    out = _out_dir(args)
    grid = cfg.lambda_grid
    if grid is None:
        grid = [10.0 ** k for k in range(-6, 1)]
    payloads = [
        {"config": cfg.to_dict(), "lam": float(lam), "seed": cfg.seed + r}
        for lam in grid for r in range(cfg.repeats)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_worker, payloads))
    else:
        rows = [_sweep_worker(p) for p in payloads]
    rows.sort(key=lambda r: (r["lambda"], r["seed"]))
    all_rows = rows + summarize_sweep_rows(rows)

    header = SWEEP_COLUMNS + [c + "_std" for c in METRIC_COLUMNS]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, restval="")
        w.writeheader()
        for row in all_rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    with open(out / "sweep_config.json", "w") as fh:
        json.dump({"config": cfg.to_dict(), "lambda_grid": list(map(float, grid))},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    n_err = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} runs ({n_err} failed) -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for task in ("regression", "classification"):
        for i in range(args.instances):
            report = check_meta_gradient(task=task, seed=args.seed + i,
                                         sign_flip=args.inject_sign_flip)
            worst = max(worst, report.max_rel_error)
            blocks = "  ".join(f"{k}={v:.3e}" for k, v in report.block_errors.items())
            print(f"{task} instance {i}: max_rel={report.max_rel_error:.3e}  [{blocks}]")
    print(f"worst relative error: {worst:.3e} (tolerance {args.tol:g})")
    if worst > args.tol:
        print("FAIL: analytic update direction disagrees with finite differences")
        return EXIT_VERIFY
    print("PASS")
    return EXIT_OK


def cmd_curves(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    out = _out_dir(args)
    losses = np.linspace(args.loss_min, args.loss_max, args.points)
    weights, _ = v_forward_batch(bundle.theta, losses)
    with open(out / "weight_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["loss", "weight"])
        for l, v in zip(losses, weights):
            w.writerow([repr(float(l)), repr(float(v))])

    coords = (sorted(selected_set(bundle.beta, args.kappa_select))
              if args.coords is None else args.coords)
    for j in coords:
        lo, hi = bundle.spec.domain[j]
        grid = np.linspace(lo, hi, args.points)
        block = eval_coordinate(bundle.spec, j, grid)
        fj = block @ bundle.beta.beta[j]
        with open(out / f"component_{j}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", f"f_{j}"])
            for u, v in zip(grid, fj):
                w.writerow([repr(float(u)), repr(float(v))])
    with open(out / "curves_manifest.json", "w") as fh:
        json.dump({"bundle": str(args.bundle), "config": bundle.config,
                   "loss_grid": [args.loss_min, args.loss_max, args.points],
                   "coords": list(map(int, coords))},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote weight_curve.csv and {len(coords)} component curves to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    if args.target_column is not None:
        ds = load_csv(args.data, args.target_column, bundle.task)
    else:
        ds = read_dataset_csv(args.data, bundle.task)
    cfg = ExperimentConfig.load(None, {}, base=bundle.config)
    metrics = evaluate_run(cfg, bundle.spec, bundle.beta, bundle.theta,
                           ds, ds, cfg.frozen_v)
    doc = json.dumps({"config": bundle.config,
                      "metrics": metrics.to_dict(include_wall_time=False)},
                     sort_keys=True, indent=2)
    if args.out is not None:
        Path(args.out).write_text(doc + "\n")
    print(doc)
    return EXIT_OK


_OVERRIDE_KEYS = [
    "task", "n", "p", "noise", "r1", "r2", "r3", "d", "basis", "T", "b",
    "eta_beta0", "eta_theta0", "lam", "prox", "frozen_v", "H", "seed",
    "repeats", "log_every", "workers", "kappa_select",
]


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--task", choices=["regression", "classification"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--noise", default=None, help="regression noise: gauss|A|B|C")
    p.add_argument("--r1", type=float, default=None, help="label-flip / outlier rate")
    p.add_argument("--r2", type=float, default=None, help="imbalance factor")
    p.add_argument("--r3", type=float, default=None, help="feature-noise rate")
    p.add_argument("--d", type=int, default=None, help="basis functions per coordinate")
    p.add_argument("--basis", choices=["bspline_cubic", "trig_orthonormal"], default=None)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--b", type=int, default=None)
    p.add_argument("--eta-beta0", dest="eta_beta0", type=float, default=None)
    p.add_argument("--eta-theta0", dest="eta_theta0", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--prox", action="store_const", const=True, default=None)
    p.add_argument("--frozen-v", dest="frozen_v", action="store_const",
                   const=True, default=None, help="V == 1 baseline")
    p.add_argument("--H", type=int, default=None)
    p.add_argument("--kappa-select", dest="kappa_select", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--log-every", dest="log_every", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awam",
        description="Sparse additive models with learned sample reweighting")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate train/meta/test CSVs")
    _add_experiment_flags(p_gen)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="train on a generated dataset dir")
    _add_experiment_flags(p_train)
    p_train.add_argument("--data", required=True, help="directory from gen")
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="lambda-grid x seeds sweep")
    _add_experiment_flags(p_sweep)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_gc = sub.add_parser("gradcheck", help="verify the meta gradient")
    p_gc.add_argument("--instances", type=int, default=5)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--tol", type=float, default=1e-4)
    p_gc.add_argument("--inject-sign-flip", action="store_true",
                      help="self-test: flip the analytic sign, must fail")
    p_gc.set_defaults(func=cmd_gradcheck)

    p_curves = sub.add_parser("curves", help="export weighting + component curves")
    p_curves.add_argument("--bundle", required=True)
    p_curves.add_argument("--out", required=True)
    p_curves.add_argument("--loss-min", dest="loss_min", type=float, default=0.0)
    p_curves.add_argument("--loss-max", dest="loss_max", type=float, default=20.0)
    p_curves.add_argument("--points", type=int, default=201)
    p_curves.add_argument("--coords", type=int, nargs="*", default=None,
                          help="coordinates to export; default: selected set")
    p_curves.add_argument("--kappa-select", dest="kappa_select", type=float,
                          default=1e-2)
    p_curves.set_defaults(func=cmd_curves)

    p_eval = sub.add_parser("eval", help="evaluate a bundle on a dataset CSV")
    p_eval.add_argument("--bundle", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--target-column", dest="target_column", default=None,
                        help="ingest a generic CSV instead of a dataset CSV")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
