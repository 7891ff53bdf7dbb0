"""Command-line interface: ``robustxai <command> ...`` or ``python -m robustxai``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .bounds import KinkAtEndpointError, PathSpec, certify, explanation_change_bound, kink_sum_check
from .data import Dataset, fmt, load_cifar_bin, load_csv, make_blobs, save_csv, write_atomic
from .explain import LrpConfig, Method, explain_batch, normalize_rows
from .modelio import ConfigError, ModelFormatError, load_config, load_model, save_model
from .network import NonFiniteError, input_gradient
from .numerics import make_rng
from .robustness import NOISE_KINDS, NoiseSpec, SweepConfig, robustness_sweep
from .training import TrainingDiverged, train
from .verify import run_all

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("robustxai")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_list(choices):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad}; choose from {', '.join(choices)}")
        return items
    return parse


def _shape(text: str) -> tuple:
    try:
        shape = tuple(int(v) for v in text.lower().replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW or HxWxC, got {text!r}") from None
    if len(shape) not in (2, 3) or min(shape) < 1:
        raise argparse.ArgumentTypeError(f"expected HxW or HxWxC, got {text!r}")
    return shape


def _load_data(args) -> Dataset:
    if args.format == "cifar-bin":
        return load_cifar_bin(args.data, args.limit)
    return load_csv(args.data, args.limit)


def _check_dims(net, ds: Dataset):
    if net.input_dim != ds.dim:
        raise UsageError(f"model expects {net.input_dim} features, data has {ds.dim}")


def cmd_gen_data(args) -> int:
    ds = make_blobs(args.n_samples, args.n_classes, dim=args.dim, image_shape=args.image_shape,
                    seed=args.seed, separation=args.separation, blobs_per_class=args.blobs_per_class)
    save_csv(ds, args.out)
    print(f"wrote {len(ds)} samples with {ds.dim} features to {args.out}")
    return EXIT_OK


def _write_metrics(path, metrics):
    lines = ["epoch,loss,curvature_term,accuracy"]
    lines += [f"{m.epoch},{fmt(m.loss)},{fmt(m.curvature_term)},{fmt(m.accuracy)}" for m in metrics]
    write_atomic(path, "\n".join(lines) + "\n")


def cmd_train(args) -> int:
    cfg, arch = load_config(args.config)
    ds = _load_data(args)
    sizes = [ds.dim, *arch.hidden, ds.n_classes]
    metrics_path = args.metrics or f"{args.out}.metrics.csv"
    try:
        res = train(ds.X, ds.y, cfg, sizes, arch.make_activation(), input_domain=ds.domain)
    except TrainingDiverged as exc:
        _write_metrics(metrics_path, exc.metrics)
        print(f"error: {exc}; metrics for completed epochs kept in {metrics_path}", file=sys.stderr)
        return EXIT_NUMERIC
    save_model(res.network, args.out)
    _write_metrics(metrics_path, res.metrics)
    last = res.metrics[-1] if res.metrics else None
    summary = f" final loss {last.loss:.4f}, accuracy {last.accuracy:.3f}" if last else ""
    print(f"wrote {args.out} and {metrics_path};{summary}")
    return EXIT_OK


def cmd_explain(args) -> int:
    net = load_model(args.model)
    ds = _load_data(args)
    _check_dims(net, ds)
    if not 0 <= args.index < len(ds):
        raise UsageError(f"index {args.index} out of range for {len(ds)} samples")
    x = ds.X[args.index:args.index + 1]
    maps, k, zeros = explain_batch(net, x, args.method, steps=args.steps, lrp=LrpConfig(epsilon=args.epsilon))
    raw = maps[0]
    ch = ds.channels
    norm, _ = normalize_rows(maps, ch)
    lines = [f"# method = {Method(args.method).value}", f"# class = {int(k[0])}",
             f"# l1_mass = {fmt(np.abs(raw).sum())}", f"# channels = {ch}"]
    if Method(args.method) is Method.LRP:
        lines.append(f"# zero_denominators = {zeros}")
    lines.append("index,raw,normalized")
    for i, r in enumerate(raw):
        # the normalised value belongs to a pixel; it is written on the pixel's first channel
        n = fmt(norm[0, i // ch]) if i % ch == 0 else ""
        lines.append(f"{i},{fmt(r)},{n}")
    write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out} ({Method(args.method).value}, class {int(k[0])})")
    return EXIT_OK


REPORT_COLUMNS = ("method", "noise", "level", "pcc_mean", "pcc_std", "ssim_mean", "ssim_std",
                  "mse_mean", "mse_std", "perturbed_accuracy", "n", "n_excluded")


def cmd_evaluate(args) -> int:
    net = load_model(args.model)
    ds = _load_data(args)
    _check_dims(net, ds)
    for lv in args.levels:
        if not 0 <= lv <= 0.5:
            raise UsageError(f"noise level {lv} outside [0, 0.5]")
    specs = [NoiseSpec(kind, float(lv), args.seed) for kind in args.noise for lv in args.levels]
    cfg = SweepConfig(image_shape=ds.image_shape, ig_steps=args.steps, lrp=LrpConfig(epsilon=args.epsilon))
    report = robustness_sweep(net, ds.X, ds.y, args.methods, specs, cfg)
    lines = [",".join(REPORT_COLUMNS)]
    for r in report.rows:
        vals = [getattr(r, c) for c in REPORT_COLUMNS]
        lines.append(",".join(v if isinstance(v, str) else str(v) if isinstance(v, int) else fmt(v)
                              for v in vals))
    write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(report.rows)} rows to {args.out}; clean accuracy {report.clean_accuracy:.3f}")
    if any(r.n_excluded == r.n for r in report.rows):
        print("error: similarity undefined for every sample in at least one row", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _bound_inputs(args, net):
    if args.start is not None:
        return [args.start]
    if args.data is not None:
        ds = _load_data(args)
        _check_dims(net, ds)
        idx = args.index if args.index is not None else list(range(min(args.inputs, len(ds))))
        for i in idx:
            if not 0 <= i < len(ds):
                raise UsageError(f"index {i} out of range for {len(ds)} samples")
        return [ds.X[i] for i in idx]
    lo, hi = net.input_domain
    return list(make_rng(args.seed, 0).uniform(lo, hi, size=(args.inputs, net.input_dim)))


def _path(args, net):
    if (args.start is None) != (args.end is None):
        raise UsageError("--start and --end must be given together")
    if args.start is None:
        return None
    if args.start.shape != (net.input_dim,) or args.end.shape != (net.input_dim,):
        raise UsageError(f"path endpoints need {net.input_dim} coordinates")
    return PathSpec(args.start, args.end)


def _vec(v) -> str:
    return ";".join(fmt(t) for t in v)


def cmd_bound(args) -> int:
    net = load_model(args.model)
    path = _path(args, net)
    head = [f"# activation = {net.activation}", "# sizes = " + ";".join(str(s) for s in net.sizes)]
    if net.activation.smooth or net.affine:
        cols = ["input", "class", "layer_norms", "sigma1", "sigma2", "hessian_bound", "hessian_sampled",
                "hessian_exact", "slack", "path_length", "change_bound", "change_measured"]
        lines = head + [",".join(cols)]
        for i, x in enumerate(_bound_inputs(args, net)):
            cert = certify(net, x, cls=args.cls, samples=args.samples, rng=make_rng(args.seed, 1, i), exact=False)
            sampled = cert.measured
            exact = ""
            slack = cert.bound - sampled
            if net.input_dim <= 64:
                exact_cert = certify(net, x, cls=cert.cls, exact=True)
                exact = fmt(exact_cert.measured)
                slack = exact_cert.slack
            row = [str(i), str(cert.cls), _vec(cert.layer_norms), fmt(cert.sigma1), fmt(cert.sigma2),
                   fmt(cert.bound), fmt(sampled), exact, fmt(slack)]
            if path is not None:
                change = input_gradient(net, path.start, cert.cls) - input_gradient(net, path.end, cert.cls)
                row += [fmt(path.length), fmt(explanation_change_bound(cert, path)), fmt(np.linalg.norm(change))]
            else:
                row += ["", "", ""]
            lines.append(",".join(row))
    else:
        if path is None:
            raise UsageError("a ReLU model needs --start and --end: its bound comes from the kinks along a path")
        res = kink_sum_check(net, path, cls=args.cls)
        lines = head + [
            f"# kinks = {len(res.kinks)}",
            f"# delta_h_measured = {_vec(res.measured)}",
            f"# delta_h_formula = {_vec(res.formula)}",
            f"# delta_h_sq = {fmt(res.change_sq)}",
            f"# kink_bound = {fmt(res.bound)}",
            f"# formula_deviation = {fmt(np.max(np.abs(res.formula - res.measured)))}",
            "t,layer,unit,sign",
        ]
        lines += [f"{fmt(k.t)},{k.layer},{k.unit},{k.sign}" for k in res.kinks]
    write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_all(args.seed, quick=args.quick)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return EXIT_VERIFY if failed else EXIT_OK


def _data_args(p, required=True):
    p.add_argument("--data", required=required, help="dataset path (CSV with .meta sidecar, or CIFAR-10 batch)")
    p.add_argument("--format", choices=("csv", "cifar-bin"), default="csv")
    p.add_argument("--limit", type=int, default=None, help="read at most this many samples")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustxai", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic Gaussian-blob dataset")
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--n-classes", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--dim", type=int)
    g.add_argument("--image-shape", type=_shape, help="HxW or HxWxC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--blobs-per-class", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a key = value config")
    p.add_argument("--config", required=True)
    _data_args(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--metrics", help="metrics CSV (default: <out>.metrics.csv)")
    p.set_defaults(func=cmd_train)

    methods = [m.value for m in Method]
    p = sub.add_parser("explain", help="explanation map for one sample")
    p.add_argument("--model", required=True)
    _data_args(p)
    p.add_argument("--method", choices=methods, required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--steps", type=int, default=64, help="integrated-gradients steps")
    p.add_argument("--epsilon", type=float, default=1e-9, help="LRP stabiliser")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="explanation robustness under input noise")
    p.add_argument("--model", required=True)
    _data_args(p)
    p.add_argument("--methods", type=_csv_list(methods), default=["gradient"])
    p.add_argument("--noise", type=_csv_list(NOISE_KINDS), default=["gaussian"])
    p.add_argument("--levels", type=_floats, default=np.array([0.005, 0.01, 0.025]))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=64, help="integrated-gradients steps")
    p.add_argument("--epsilon", type=float, default=1e-9, help="LRP stabiliser")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bound", help="Hessian certificate (Softplus) or kink analysis (ReLU)")
    p.add_argument("--model", required=True)
    _data_args(p, required=False)
    p.add_argument("--index", type=lambda s: [int(v) for v in s.split(",")], default=None,
                   help="comma-separated sample indices to certify")
    p.add_argument("--start", type=_floats, help="path start, comma-separated")
    p.add_argument("--end", type=_floats, help="path end, comma-separated")
    p.add_argument("--class", dest="cls", type=int, default=None, help="explained class (default: predicted)")
    p.add_argument("--inputs", type=int, default=4, help="random inputs when no data or path is given")
    p.add_argument("--samples", type=int, default=16, help="probes for the sampled Hessian norm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("verify", help="run the built-in oracle suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="smaller sample counts")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigError, ModelFormatError, KinkAtEndpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())
