"""Command-line entry point: ``hypergp <command> [options]``.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import HyperGPError, InputError, NumericalError
from .gp import CategoricalLikelihood, fit_svgp, log_predictive_density, predict_svgp
from .gplvm import fit_gplvm, spectral_embedding
from .hypergraph import clique_expansion, degree_matrices, incidence_matrix, laplacian
from .inducing import inducing_vertices, kmeans
from .kernels import (
    MaternHyperparams,
    diffusion_gram,
    eigendecompose,
    graph_matern_gram,
    matern_gram,
)
from .kpmf import (
    co_review_hypergraphs,
    kpmf_fit,
    kpmf_predict,
    nystrom_approx,
    train_test_split,
)
from .metrics import CONVENTIONS, classification_metrics, clustering_scores, ece, rmse
from .optim import OptConfig

REPRESENTATIONS = ("hypergraph", "clique-weighted", "clique-binary")
# settings that do not change results and stay out of the config hash
_UNHASHED = ("out_dir", "config", "func")


def _summary(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return {"mean": None, "stderr": None}
    arr = np.asarray(vals, dtype=np.float64)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else None
    return {"mean": float(arr.mean()), "stderr": stderr}


def _hp(args):
    return MaternHyperparams(args.nu, args.lengthscale, args.variance)


def _opt(args, seed):
    return OptConfig(steps=args.steps, learning_rate=args.learning_rate, seed=seed,
                     learn_hyperparams=not args.fixed_hyperparams,
                     final_lr_ratio=args.final_lr_ratio)


def _spectral_kernel(delta, args):
    spec = eigendecompose(delta)
    if args.kernel == "diffusion":
        return diffusion_gram(spec, args.beta)
    return matern_gram(spec, _hp(args), normalize=not args.no_normalize)


class Run:
    """Output directory bookkeeping shared by all commands."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out_dir)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"cannot create output directory {self.out}: {exc}") from exc
        self.files = []

    def path(self, name):
        self.files.append(name)
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    @property
    def config(self):
        return {k: v for k, v in sorted(vars(self.args).items()) if k not in _UNHASHED}

    def results(self, table, name="metrics.json", conventions=None):
        io.save_results(table, self.path(name), self.args.seed, self.config, conventions)

    def finish(self):
        manifest = {
            "command": self.args.command,
            "seed": self.args.seed,
            "config": self.config,
            "config_hash": io.config_hash(self.config),
            "outputs": sorted(set(self.files)),
        }
        (self.out / "manifest.json").write_text(
            json.dumps(io._jsonable(manifest), indent=2, sort_keys=True) + "\n")
        return 0


# ---------------------------------------------------------------------------
# commands


def cmd_kernel(args):
    run = Run(args)
    g = io.read_hypergraph(args.hypergraph)
    k = _spectral_kernel(laplacian(g), args)
    io.write_gram(k, run.path("gram.bin"), g.vertex_names)
    run.files.append("gram.bin.json")
    return run.finish()


def _classification_kernels(g, args):
    h = incidence_matrix(g)
    kernels = {}
    for rep in args.repr:
        if rep == "hypergraph":
            kernels[rep] = matern_gram(eigendecompose(laplacian(g)), _hp(args))
        else:
            mode = "weighted" if rep == "clique-weighted" else "binary"
            kernels[rep] = graph_matern_gram(clique_expansion(h, mode), _hp(args))
    return kernels


def cmd_classify(args):
    run = Run(args)
    data = io.load_dataset(args.hypergraph, args.labels)
    g, labels = data.hypergraph, data.labels
    n_classes = len(data.class_names)
    if n_classes < 2:
        raise InputError("classification needs at least two classes")
    kernels = _classification_kernels(g, args)
    J = g.num_vertices if args.J is None else args.J
    metric_names = ("accuracy", "recall", "precision", "ece", "log_predictive_density")
    per = {rep: [] for rep in kernels}
    for p in range(args.partitions):
        seed = args.seed + p
        if args.splits:
            test = io.read_splits(args.splits, g)
        else:
            test = io.stratified_split(labels, args.test_fraction, seed)
        train_idx, test_idx = np.flatnonzero(~test), np.flatnonzero(test)
        if train_idx.size == 0 or test_idx.size == 0:
            raise InputError("split leaves an empty train or test set")
        inducing, _ = inducing_vertices(g, J, args.k, seed)
        for rep, k in kernels.items():
            lik = CategoricalLikelihood(n_classes, args.mc_samples, seed)
            state, trace = fit_svgp(k, train_idx, labels[train_idx], lik, inducing.indices,
                                    _opt(args, seed))
            io.write_trace(run.path(f"traces/elbo_{rep}_p{p}.txt"), trace)
            pred = predict_svgp(state, k, test_idx)
            probs = pred.class_probabilities
            row = classification_metrics(labels[test_idx], probs)
            row["ece"] = ece(labels[test_idx], probs)
            row["log_predictive_density"] = log_predictive_density(pred, labels[test_idx])
            row["final_elbo"] = float(trace[-1])
            per[rep].append(row)
    table = {rep: {"partitions": rows,
                   "summary": {m: _summary([r[m] for r in rows]) for m in metric_names}}
             for rep, rows in per.items()}
    run.results(table, conventions=CONVENTIONS)
    return run.finish()


def cmd_embed(args):
    run = Run(args)
    data = io.load_dataset(args.hypergraph, args.labels)
    g = data.hypergraph
    delta = laplacian(g)
    degrees = degree_matrices(g).vertex_degrees
    k_vv = _spectral_kernel(delta, args)
    Q = args.latent_dim
    meta = {"method": args.method, "latent_dim": Q,
            "scoring": "k-means with k = number of classes on the embedding "
                       "(surrogate for class convex hulls)",
            "kmeans_restarts": args.kmeans_restarts}
    if args.method == "spectral":
        X = spectral_embedding(delta, Q, degrees)
    else:
        res = fit_gplvm(incidence_matrix(g), k_vv, Q, _opt(args, args.seed),
                        lengthscale=args.se_lengthscale, variance=args.se_variance,
                        noise_variance=args.noise_variance, delta=delta,
                        vertex_degrees=degrees)
        X = res.X
        io.write_trace(run.path("trace.txt"), res.objective_trace)
        meta["final"] = {"lengthscale": res.config.lengthscale,
                         "variance": res.config.variance,
                         "noise_variance": res.config.noise_variance,
                         "objective": float(res.objective_trace[-1])}
    labels_out = None
    table = {}
    if data.labels is not None:
        labels_out = [data.class_names[c] for c in data.labels]
        n_classes = len(data.class_names)
        pred, _ = kmeans(X, n_classes, args.seed, n_init=args.kmeans_restarts)
        table = clustering_scores(data.labels, pred)
    io.write_embedding(run.path("embedding.tsv"), data.names, X, labels_out)
    run.results({"scores": table, "meta": meta}, "scores.json", CONVENTIONS)
    return run.finish()


def _kpmf_priors(train, args, seed):
    user_hg, item_hg = co_review_hypergraphs(train)
    priors = []
    for idx, hg in enumerate((user_hg, item_hg)):
        k = _spectral_kernel(laplacian(hg), args)
        if args.sparse is not None:
            z, _ = inducing_vertices(hg, args.sparse[idx], None, seed)
            k = nystrom_approx(k, z.indices)
        priors.append(k)
    return priors


def cmd_kpmf(args):
    run = Run(args)
    r, user_names, item_names = io.read_ratings(args.ratings)
    if args.sparse is not None and (args.sparse[0] > r.n_rows or args.sparse[1] > r.n_cols):
        raise InputError(f"--sparse exceeds the matrix size {r.n_rows} x {r.n_cols}")
    rows = []
    for p in range(args.partitions):
        seed = args.seed + p
        train, test = train_test_split(r, args.test_fraction, seed)
        ku, kw = _kpmf_priors(train, args, seed)
        cfg = OptConfig(steps=args.steps, learning_rate=args.learning_rate, seed=seed,
                        final_lr_ratio=args.final_lr_ratio)
        fp, trace = kpmf_fit(train, args.latent_dim, ku, kw, cfg)
        io.write_trace(run.path(f"traces/objective_p{p}.txt"), trace)
        io.save_factors(fp, run.path(f"factors_p{p}.npz"), {"seed": seed})
        run.files.append(f"factors_p{p}.json")
        if args.no_clip:
            clip = None
        elif args.clip:
            clip = tuple(args.clip)
        else:
            clip = (float(train.values.min()), float(train.values.max()))
        pairs_tr = np.c_[train.rows, train.cols]
        row = {"train_rmse": rmse(train.values, kpmf_predict(fp, pairs_tr, clip)),
               "clip": list(clip) if clip else None}
        lines = []
        if test.num_observed:
            pairs_te = np.c_[test.rows, test.cols]
            raw = kpmf_predict(fp, pairs_te)
            row["test_rmse"] = rmse(test.values, kpmf_predict(fp, pairs_te, clip))
            row["baseline_rmse"] = rmse(test.values,
                                        np.full(test.num_observed, train.values.mean()))
            lines = [f"{user_names[a]}\t{item_names[b]}\t{float(v)!r}\t{float(q)!r}\n"
                     for a, b, v, q in zip(test.rows, test.cols, test.values, raw)]
        else:
            row["test_rmse"] = None
            row["baseline_rmse"] = None
        run.path(f"predictions_p{p}.tsv").write_text(
            "# user\titem\trating\tprediction (unclipped)\n" + "".join(lines))
        row["noise_variance"] = fp.noise_variance
        rows.append(row)
    keys = ("train_rmse", "test_rmse", "baseline_rmse")
    table = {"partitions": rows, "summary": {m: _summary([r[m] for r in rows]) for m in keys},
             "nystrom_regulariser_scale": 1e-6 if args.sparse is not None else None}
    run.results(table)
    return run.finish()


def cmd_select_inducing(args):
    run = Run(args)
    g = io.read_hypergraph(args.hypergraph)
    inducing, gamma = inducing_vertices(g, args.J, args.k, args.seed)
    payload = inducing.to_json(gamma)
    if g.vertex_names:
        payload["names"] = [g.vertex_names[i] for i in inducing.indices]
    run.path("inducing.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return run.finish()


# ---------------------------------------------------------------------------
# argument parsing


def _kernel_flags(p, default_kernel="matern"):
    p.add_argument("--kernel", choices=("matern", "diffusion"), default=default_kernel)
    p.add_argument("--nu", type=float, default=1.5)
    p.add_argument("--lengthscale", type=float, default=5.0)
    p.add_argument("--variance", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--no-normalize", action="store_true",
                   help="skip rescaling Matérn grams to unit mean variance")


def _opt_flags(p, steps, lr, final_ratio):
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--learning-rate", type=float, default=lr)
    p.add_argument("--final-lr-ratio", type=float, default=final_ratio)
    p.add_argument("--fixed-hyperparams", action="store_true")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="hypergp", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="hypergp-out")
    parser.add_argument("--config", default=None,
                        help="flat 'key = value' file; keys mirror the long flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", parents=[common], help="build a Gram matrix")
    p.add_argument("--hypergraph", required=True)
    _kernel_flags(p)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("classify", parents=[common], help="SVGP vertex classification")
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits", default=None)
    p.add_argument("--repr", nargs="+", choices=REPRESENTATIONS, default=list(REPRESENTATIONS))
    p.add_argument("--partitions", type=int, default=10)
    p.add_argument("--test-fraction", type=float, default=0.5)
    p.add_argument("--J", type=int, default=None, help="inducing vertices (default: all)")
    p.add_argument("--k", type=int, default=None, help="clusters for inducing selection")
    p.add_argument("--mc-samples", type=int, default=20)
    _kernel_flags(p)
    _opt_flags(p, 300, 0.05, 0.1)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("embed", parents=[common], help="latent embedding of vertices")
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--method", choices=("gplvm", "spectral"), default="gplvm")
    p.add_argument("--latent-dim", type=int, default=2)
    p.add_argument("--se-lengthscale", type=float, default=1.0)
    p.add_argument("--se-variance", type=float, default=1.0)
    p.add_argument("--noise-variance", type=float, default=0.01)
    p.add_argument("--kmeans-restarts", type=int, default=10)
    _kernel_flags(p)
    _opt_flags(p, 500, 0.01, 0.1)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("kpmf", parents=[common], help="matrix completion with KPMF")
    p.add_argument("--ratings", required=True)
    p.add_argument("--sparse", type=int, nargs=2, metavar=("J_U", "J_W"), default=None)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--latent-dim", type=int, default=10)
    p.add_argument("--partitions", type=int, default=1)
    p.add_argument("--clip", type=float, nargs=2, metavar=("LO", "HI"), default=None,
                   help="prediction range for RMSE (default: training rating range)")
    p.add_argument("--no-clip", action="store_true")
    _kernel_flags(p)
    _opt_flags(p, 1000, 0.02, 0.01)
    p.set_defaults(func=cmd_kpmf)

    p = sub.add_parser("select-inducing", parents=[common], help="pick inducing vertices")
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_select_inducing)
    return parser


def read_config(path) -> dict:
    """Flat ``key = value`` (or ``key value``) lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in io._content_lines(path):
        if "=" in line:
            key, value = line.split("=", 1)
        else:
            parts = line.split(None, 1)
            key, value = parts[0], parts[1] if len(parts) > 1 else "true"
        out[key.strip().lstrip("-").replace("-", "_")] = (value.strip(), lineno)
    return out


def _convert(action, raw, path, lineno):
    if action.nargs == 0:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise io.ParseError(f"expected a boolean, got {raw!r}", path, lineno)
    conv = action.type or str
    try:
        if action.nargs in ("+", "*") or isinstance(action.nargs, int):
            vals = [conv(t) for t in raw.replace(",", " ").split()]
            return vals
        value = conv(raw)
    except ValueError:
        raise io.ParseError(f"bad value {raw!r} for {action.dest}", path, lineno) from None
    if action.choices is not None and value not in action.choices:
        raise io.ParseError(f"{value!r} not one of {list(action.choices)}", path, lineno)
    return value


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    entries = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    actions.update({a.dest: a for a in parser._actions if a.dest in ("seed", "out_dir")})
    explicit = set()
    for tok in argv:
        if tok.startswith("--"):
            explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, (raw, lineno) in entries.items():
        if key not in actions:
            raise io.ParseError(f"unknown setting {key!r}", args.config, lineno)
        if key in explicit:
            continue
        setattr(args, key, _convert(actions[key], raw, args.config, lineno))
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    except HyperGPError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except HyperGPError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
