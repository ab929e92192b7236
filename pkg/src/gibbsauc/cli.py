"""Command-line interface.

Subcommands: fit, predict, eval, benchmark, select-features,
compare-backends. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import model_io
from .data import (
    LabeledDataset,
    load_dataset,
    load_features,
    standardize,
    stratified_split,
)
from .ep_gaussian import EpConfig, ep_fit
from .ep_spike_slab import (
    default_v0_grid,
    ep_fit_spike_slab,
    regularization_path,
    write_path_csv,
)
from .errors import DataError, NumericalError, ToolkitError
from .gp import GpGibbsTarget, SqExpKernel, gp_ep_fit, gram
from .risk import roc_auc
from .smc import SmcConfig, run_tempering_smc
from .targets import (
    DefaultHyperRecipe,
    GaussianPrior,
    GibbsTarget,
    SpikeSlabPrior,
    default_hyperparameters,
)
from .tuning import (
    cross_validate_gamma,
    default_gamma_grid,
    default_theta_var_grid,
    ep_gaussian_scorers,
    gaussian_ep_evidence,
    gp_scorers,
    maximize_evidence,
    smc_scorers,
)

from scipy.linalg import cho_factor, cho_solve


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage failures exit 1, not argparse's 2
        raise UsageError(message)


def _add_data_flags(p, labeled=True):
    p.add_argument("--data", required=True, help="CSV file")
    p.add_argument("--label-col", default=None, help="label column name or 0-based index")
    if labeled:
        p.add_argument("--positive-label", default=None, help="label token mapped to +1")


def _add_model_flags(p):
    p.add_argument("--prior", choices=["gaussian", "spikeslab"], default="gaussian")
    p.add_argument("--gp", action="store_true", help="Gaussian-process score function")
    p.add_argument("--backend", choices=["ep", "smc"], default="ep")
    p.add_argument("--gamma", default=None, help="temperature value, or 'auto' for CV")
    p.add_argument("--theta-var", type=float, default=None, help="Gaussian prior variance")
    p.add_argument("--v0", type=float, default=None, help="spike variance (0 allowed with EP)")
    p.add_argument("--v1", type=float, default=1.0, help="slab variance")
    p.add_argument("--p", type=float, default=None, help="prior inclusion probability")
    p.add_argument("--kernel-ls", type=float, default=None, help="kernel lengthscale")
    p.add_argument("--kernel-var", type=float, default=1.0, help="kernel variance")
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--ess-tau", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--move-steps", type=int, default=3)
    p.add_argument("--damping", type=float, default=0.8)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--margin-c", type=float, default=1.0, help="margin constant C")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="gibbsauc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and save it")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--dump-particles", default=None, help="CSV dump of the final SMC cloud")

    p = sub.add_parser("predict", help="score rows with a saved model")
    _add_data_flags(p, labeled=False)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="scores CSV to write")

    p = sub.add_parser("eval", help="AUC and ROC of a saved model on labeled data")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="ROC CSV to write")

    p = sub.add_parser("benchmark", help="repeated-split AUC comparison table")
    p.add_argument("--manifest", default=None, help="JSON list of dataset specs")
    p.add_argument("--data", default=None)
    p.add_argument("--label-col", default=None)
    p.add_argument("--positive-label", default=None)
    p.add_argument("--name", default=None, help="dataset display name")
    p.add_argument("--gp", action="store_true", help="also run the GP method")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--test-frac", type=float, default=0.3)
    p.add_argument("--gamma", default="auto")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--damping", type=float, default=0.8)
    p.add_argument("--margin-c", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="results CSV")

    p = sub.add_parser("select-features", help="spike-and-slab feature selection")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--v0-grid", default=None,
                   help="descending comma list of spike variances, or 'default'")
    p.add_argument("--out", default=None, help="regularization path CSV")

    p = sub.add_parser("compare-backends", help="EP vs SMC moments and evidence")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", default=None, help="per-coordinate comparison CSV")
    p.add_argument("--dump-particles", default=None)
    return parser


def _require(cond, message):
    if not cond:
        raise UsageError(message)


def _load_standardized(args) -> tuple[LabeledDataset, object]:
    _require(args.label_col is not None, "--label-col is required")
    _require(args.positive_label is not None, "--positive-label is required")
    ds = load_dataset(args.data, args.label_col, args.positive_label)
    ds.require_both_classes()
    return standardize(ds)


def _resolve_gamma(args, ds_std: LabeledDataset, recipe) -> tuple[float, str]:
    """Returns (gamma, how); 'auto' cross-validates on the default grid."""
    if args.gamma is None:
        return default_hyperparameters(ds_std.n, ds_std.d, recipe).gamma, "recipe"
    if args.gamma != "auto":
        try:
            g = float(args.gamma)
        except ValueError:
            raise UsageError(f"--gamma must be a number or 'auto', got {args.gamma!r}")
        _require(g >= 0, "--gamma must be >= 0")
        return g, "fixed"
    grid = default_gamma_grid(ds_std.n)
    if args.gp:
        kernel = _kernel_from_args(args, ds_std.d)
        factory = gp_scorers(kernel, damping=args.damping)
    elif args.backend == "smc":
        prior = GaussianPrior(_theta_var(args, ds_std, recipe))
        factory = smc_scorers(prior, _smc_cfg(args, gamma_max=float(grid.max())))
    else:
        prior = GaussianPrior(_theta_var(args, ds_std, recipe))
        factory = ep_gaussian_scorers(prior, damping=args.damping)
    cv = cross_validate_gamma(ds_std, factory, grid, k=args.folds, seed=args.seed)
    return cv.gamma, "cv"


def _theta_var(args, ds_std, recipe) -> float:
    if args.theta_var is not None:
        return args.theta_var
    return default_hyperparameters(ds_std.n, ds_std.d, recipe).theta_var


def _kernel_from_args(args, d) -> SqExpKernel:
    ls = args.kernel_ls if args.kernel_ls is not None else float(np.sqrt(d))
    return SqExpKernel(variance=args.kernel_var, lengthscale=ls)


def _smc_cfg(args, gamma_max=None) -> SmcConfig:
    return SmcConfig(
        n_particles=args.particles,
        ess_threshold=args.ess_tau,
        kappa=args.kappa,
        gamma_max=gamma_max,
        move_steps=args.move_steps,
        seed=args.seed,
    )


def _spike_prior(args, ds_std, recipe) -> SpikeSlabPrior:
    hp = default_hyperparameters(ds_std.n, ds_std.d, recipe)
    p = args.p if args.p is not None else hp.p
    v0 = args.v0 if args.v0 is not None else hp.v0_max
    return SpikeSlabPrior(p=p, v0=v0, v1=args.v1)


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    ds_std, params = _load_standardized(args)
    recipe = DefaultHyperRecipe(C=args.margin_c)
    gamma, how = _resolve_gamma(args, ds_std, recipe)

    if args.gp:
        kernel = _kernel_from_args(args, ds_std.d)
        if args.backend == "ep":
            post = gp_ep_fit(ds_std, kernel, EpConfig(gamma=gamma, damping=args.damping))
            if post.warning:
                print(f"warning: {post.warning}", file=sys.stderr)
            mean, log_z = post.mean, post.log_evidence
        else:
            target = GpGibbsTarget(ds_std, kernel, gamma)
            run = run_tempering_smc(target, _smc_cfg(args))
            if args.dump_particles:
                run.dump_csv(args.dump_particles)
            mean, log_z = run.posterior_mean(), run.log_evidence
        K = gram(ds_std.X, kernel)
        weights = cho_solve(cho_factor(K, lower=True), mean)
        scores = K @ weights
        _, train_auc = roc_auc(scores, ds_std.y)
        model = model_io.FittedModel(
            kind=model_io.KIND_GP,
            backend=args.backend,
            gamma=gamma,
            prior={"kernel_variance": kernel.variance, "kernel_lengthscale": kernel.lengthscale},
            standardization=params,
            log_evidence=log_z,
            train_auc=train_auc,
            seed=args.seed,
            columns=ds_std.columns,
            gp_X_train=ds_std.X,
            gp_weights=weights,
            gp_kernel=kernel,
        )
    elif args.prior == "spikeslab":
        prior = _spike_prior(args, ds_std, recipe)
        if args.backend == "smc":
            _require(prior.v0 > 0, "a Dirac spike (v0 = 0) is EP-only; "
                                   "use --backend ep or a positive --v0")
            target = GibbsTarget(prior, gamma, ds_std)
            run = run_tempering_smc(target, _smc_cfg(args))
            if args.dump_particles:
                run.dump_csv(args.dump_particles)
            coef, cov, log_z = run.posterior_mean(), np.cov(run.particles, rowvar=False), run.log_evidence
            inclusion = None
        else:
            fit = ep_fit_spike_slab(ds_std, prior, EpConfig(gamma=gamma, damping=args.damping))
            if fit.warning:
                print(f"warning: {fit.warning}", file=sys.stderr)
            coef, cov, log_z, inclusion = fit.mean, fit.cov, fit.log_evidence, fit.inclusion
        _, train_auc = roc_auc(ds_std.X @ coef, ds_std.y)
        model = model_io.FittedModel(
            kind=model_io.KIND_LINEAR_SPIKESLAB,
            backend=args.backend,
            gamma=gamma,
            prior={"p": prior.p, "v0": prior.v0, "v1": prior.v1},
            standardization=params,
            log_evidence=log_z,
            train_auc=train_auc,
            seed=args.seed,
            columns=ds_std.columns,
            coef=coef,
            cov=cov,
            inclusion=inclusion,
        )
    else:
        theta_var = _theta_var(args, ds_std, recipe)
        prior = GaussianPrior(theta_var)
        if args.backend == "smc":
            target = GibbsTarget(prior, gamma, ds_std)
            run = run_tempering_smc(target, _smc_cfg(args))
            if args.dump_particles:
                run.dump_csv(args.dump_particles)
            coef, cov, log_z = run.posterior_mean(), np.cov(run.particles, rowvar=False), run.log_evidence
        else:
            fit = ep_fit(ds_std, prior, EpConfig(gamma=gamma, damping=args.damping))
            if fit.warning:
                print(f"warning: {fit.warning}", file=sys.stderr)
            coef, cov, log_z = fit.mean, fit.cov, fit.log_evidence
        _, train_auc = roc_auc(ds_std.X @ coef, ds_std.y)
        model = model_io.FittedModel(
            kind=model_io.KIND_LINEAR_GAUSSIAN,
            backend=args.backend,
            gamma=gamma,
            prior={"theta_var": theta_var},
            standardization=params,
            log_evidence=log_z,
            train_auc=train_auc,
            seed=args.seed,
            columns=ds_std.columns,
            coef=coef,
            cov=cov,
        )
    model_io.save_model(model, args.out)
    dt = time.perf_counter() - t0
    print(f"model written to {args.out}")
    print(f"gamma = {gamma:.6g} ({how})")
    print(f"log evidence = {model.log_evidence:.6f}")
    print(f"training AUC = {model.train_auc:.4f}")
    print(f"wall time = {dt:.2f} s")
    return 0


def cmd_predict(args) -> int:
    model = model_io.load_model(args.model)
    X = load_features(args.data, args.label_col)
    if X.shape[1] != model.n_features:
        raise DataError(
            f"model expects {model.n_features} features, file has {X.shape[1]}"
        )
    scores = model.score(X)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("score\n")
        for s in scores:
            fh.write(f"{float(s)!r}\n")
    print(f"wrote {scores.size} scores to {args.out}")
    return 0


def cmd_eval(args) -> int:
    _require(args.label_col is not None and args.positive_label is not None,
             "eval needs labels: pass --label-col and --positive-label")
    model = model_io.load_model(args.model)
    ds = load_dataset(args.data, args.label_col, args.positive_label)
    if ds.d != model.n_features:
        raise DataError(
            f"model expects {model.n_features} features, file has {ds.d}"
        )
    scores = model.score(ds.X)
    curve, auc = roc_auc(scores, ds.y)
    print(f"AUC = {auc:.4f} on {ds.n} rows ({ds.n_pos} positive, {ds.n_neg} negative)")
    if args.out:
        curve.write_csv(args.out)
        print(f"ROC written to {args.out}")
    return 0


def _benchmark_one(name, ds_raw, args):
    """Mean test AUC over repeated stratified splits, tuned per rep."""
    recipe = DefaultHyperRecipe(C=args.margin_c)
    ep_auc, gp_auc = [], []
    for rep in range(args.reps):
        tr_idx, te_idx = stratified_split(ds_raw, args.test_frac, args.seed + rep)
        train_raw, test_raw = ds_raw.subset(tr_idx), ds_raw.subset(te_idx)
        train, params = standardize(train_raw)
        test_X = params.apply(test_raw.X)
        hp = default_hyperparameters(train.n, train.d, recipe)
        ev = maximize_evidence(
            train,
            gaussian_ep_evidence(hp.gamma, damping=args.damping),
            default_theta_var_grid(train.n, train.d),
        )
        prior = GaussianPrior(ev.best)
        if args.gamma == "auto":
            cv = cross_validate_gamma(
                train,
                ep_gaussian_scorers(prior, damping=args.damping),
                default_gamma_grid(train.n),
                k=args.folds,
                seed=args.seed + rep,
            )
            gamma = cv.gamma
        else:
            gamma = float(args.gamma)
        fit = ep_fit(train, prior, EpConfig(gamma=gamma, damping=args.damping))
        _, auc = roc_auc(test_X @ fit.mean, test_raw.y)
        ep_auc.append(auc)
        if args.gp:
            kernel = SqExpKernel(variance=1.0, lengthscale=float(np.sqrt(train.d)))
            post = gp_ep_fit(train, kernel, EpConfig(gamma=gamma, damping=args.damping))
            from .gp import gp_predict

            _, auc_gp = roc_auc(gp_predict(post, test_X), test_raw.y)
            gp_auc.append(auc_gp)
    balance = min(ds_raw.n_pos, ds_raw.n_neg) / ds_raw.n
    return {
        "dataset": name,
        "covariates": ds_raw.d,
        "balance": balance,
        "ep_auc": float(np.mean(ep_auc)),
        "gpep_auc": float(np.mean(gp_auc)) if gp_auc else None,
    }


def cmd_benchmark(args) -> int:
    specs = []
    if args.manifest:
        try:
            with open(args.manifest, encoding="utf-8") as fh:
                specs = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest {args.manifest}: {exc}")
    if args.data:
        specs.append(
            {
                "name": args.name or args.data,
                "path": args.data,
                "label_col": args.label_col,
                "positive_label": args.positive_label,
            }
        )
    _require(specs, "benchmark needs --manifest and/or --data")
    rows = []
    for spec in specs:
        name = spec.get("name", spec["path"])
        try:
            ds = load_dataset(spec["path"], spec["label_col"], spec["positive_label"])
            ds.require_both_classes()
            rows.append(_benchmark_one(name, ds, args))
        except (DataError, NumericalError, ToolkitError, KeyError) as exc:
            print(f"{name}: FAILED ({exc})", file=sys.stderr)
    header = f"{'Dataset':<16}{'Covariates':>11}{'Balance':>9}{'EP-AUC':>9}"
    if args.gp:
        header += f"{'GPEP-AUC':>10}"
    print(header)
    for r in rows:
        line = f"{r['dataset']:<16}{r['covariates']:>11}{r['balance']:>9.0%}{r['ep_auc']:>9.4f}"
        if args.gp:
            line += f"{r['gpep_auc']:>10.4f}" if r["gpep_auc"] is not None else f"{'-':>10}"
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("dataset,covariates,balance,ep_auc,gpep_auc\n")
            for r in rows:
                gpv = "" if r["gpep_auc"] is None else repr(r["gpep_auc"])
                fh.write(
                    f"{r['dataset']},{r['covariates']},{float(r['balance'])!r},"
                    f"{float(r['ep_auc'])!r},{gpv}\n"
                )
    return 0


def cmd_select_features(args) -> int:
    ds_std, _ = _load_standardized(args)
    recipe = DefaultHyperRecipe(C=args.margin_c)
    gamma, _ = _resolve_gamma(args, ds_std, recipe)
    prior = _spike_prior(args, ds_std, recipe)
    cfg = EpConfig(gamma=gamma, damping=args.damping)
    names = ds_std.columns or tuple(f"x{i}" for i in range(ds_std.d))

    if args.v0_grid:
        if args.v0_grid == "default":
            grid = default_v0_grid()
        else:
            grid = np.asarray([float(v) for v in args.v0_grid.split(",")])
        path = regularization_path(ds_std, prior, grid, cfg)
        if args.out:
            write_path_csv(path, args.out)
            print(f"regularization path written to {args.out}")
        for pt in path:
            if pt.error:
                print(f"v0 = {pt.v0:.3g}: failed ({pt.error})", file=sys.stderr)
        final = next((pt for pt in reversed(path) if pt.error is None), None)
        _require(final is not None, "every grid point failed")
        inclusion, mean = final.inclusion, final.mean
        print(f"selection at v0 = {final.v0:.3g}:")
    else:
        fit = ep_fit_spike_slab(ds_std, prior, cfg)
        if fit.warning:
            print(f"warning: {fit.warning}", file=sys.stderr)
        inclusion, mean = fit.inclusion, fit.mean
    print(f"{'feature':<20}{'posterior mean':>16}{'inclusion':>11}  selected")
    for k in range(ds_std.d):
        mark = "*" if inclusion[k] >= 0.5 else ""
        print(f"{names[k]:<20}{mean[k]:>16.6f}{inclusion[k]:>11.4f}  {mark}")
    return 0


def cmd_compare_backends(args) -> int:
    ds_std, _ = _load_standardized(args)
    recipe = DefaultHyperRecipe(C=args.margin_c)
    gamma, _ = _resolve_gamma(args, ds_std, recipe)
    theta_var = _theta_var(args, ds_std, recipe)
    prior = GaussianPrior(theta_var)

    fit = ep_fit(ds_std, prior, EpConfig(gamma=gamma, damping=args.damping))
    if fit.warning:
        print(f"warning: {fit.warning}", file=sys.stderr)
    run = run_tempering_smc(
        GibbsTarget(prior, gamma, ds_std), _smc_cfg(args)
    )
    if args.dump_particles:
        run.dump_csv(args.dump_particles)
    ep_sd = np.sqrt(np.diag(fit.cov))
    smc_mean, smc_sd = run.posterior_mean(), run.posterior_sd()
    names = ds_std.columns or tuple(f"x{i}" for i in range(ds_std.d))
    print(f"gamma = {gamma:.6g}, prior variance = {theta_var:.6g}")
    print(f"log evidence: EP = {fit.log_evidence:.6f}, SMC = {run.log_evidence:.6f}")
    print(f"{'feature':<20}{'EP mean':>12}{'SMC mean':>12}{'EP sd':>10}{'SMC sd':>10}")
    for k in range(ds_std.d):
        print(
            f"{names[k]:<20}{fit.mean[k]:>12.5f}{smc_mean[k]:>12.5f}"
            f"{ep_sd[k]:>10.5f}{smc_sd[k]:>10.5f}"
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("feature,ep_mean,smc_mean,ep_sd,smc_sd\n")
            for k in range(ds_std.d):
                fh.write(
                    f"{names[k]},{float(fit.mean[k])!r},{float(smc_mean[k])!r},"
                    f"{float(ep_sd[k])!r},{float(smc_sd[k])!r}\n"
                )
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "benchmark": cmd_benchmark,
    "select-features": cmd_select_features,
    "compare-backends": cmd_compare_backends,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
