"""``trajcnn`` command line.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 training (or check) failure.
"""
import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict

from . import codec
from .config import load_config
from .data import BoundingBox, load_fs_csv, write_csv
from .dp import DpConfig, PrivacyLedger, account, calibrate_sigma
from .errors import CheckpointError, ConfigurationError, FormatError, ParseError, TrainingError
from .experiment import dataset_summary, load_dataset, manifest, run_experiment, train_and_save, write_json
from .gan import GeneratorConfig, build_generator, generate
from .metrics import evaluate
from .nn.gradcheck import LAYER_KINDS
from .nn import LayerSpec, grad_check, load_into, read_checkpoint

log = logging.getLogger("trajcnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args):
    if not args.config:
        raise ConfigurationError("--config is required")
    cfg = load_config(args.config, seed=args.seed)
    if args.dp and cfg.dp is None:
        cfg.dp = DpConfig()
    return cfg


def _out(args, cfg=None):
    out = args.out or (cfg.out if cfg is not None else None)
    if out is None:
        raise ConfigurationError("--out is required")
    return out


def load_generator(path):
    meta, arrays = read_checkpoint(path)
    if "generator" not in meta or "spec" not in meta:
        raise CheckpointError(f"{path}: not a generator checkpoint")
    g = build_generator(GeneratorConfig(**meta["generator"]))
    load_into(g, arrays)
    return g, codec.NormalizationSpec.from_dict(meta["spec"]), meta


def cmd_preprocess(args):
    cfg = _config(args)
    out = _out(args, cfg)
    os.makedirs(out, exist_ok=True)
    ds = load_dataset(cfg.dataset)
    write_csv(ds, os.path.join(out, "dataset.csv"))
    summary = dataset_summary(ds)
    write_json(os.path.join(out, "summary.json"), summary)
    write_json(os.path.join(out, "manifest.json"), manifest(cfg))
    print(f"{summary['trajectories']} trajectories, {summary['points']} points, "
          f"lengths {summary['min_length']}-{summary['max_length']}")


def cmd_train(args):
    cfg = _config(args)
    out = _out(args, cfg)
    ds = load_dataset(cfg.dataset)
    spec = codec.NormalizationSpec.from_bbox(ds.bbox)
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "manifest.json"), manifest(cfg, {"dataset": dataset_summary(ds)}))
    result = train_and_save(cfg, ds, spec, out)
    final = result.log[-1]
    print(json.dumps({k: v for k, v in final.items() if k != "event"}, sort_keys=True))


def cmd_generate(args):
    g, spec, _ = load_generator(args.checkpoint)
    ds = generate(g, args.n, args.seed, spec)
    write_csv(ds, _out(args))
    print(f"wrote {len(ds)} trajectories")


def cmd_export_pointcloud(args):
    g, spec, _ = load_generator(args.checkpoint)
    ds = generate(g, args.n, args.seed, spec)
    with open(_out(args), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon"])
        for t in ds:
            for lat, lon in zip(t.lat, t.lon):
                w.writerow([repr(float(lat)), repr(float(lon))])
    print(f"wrote {args.n * len(ds[0]) if len(ds) else 0} points")


def _bbox_arg(values):
    try:
        return BoundingBox(*values)
    except ValueError as e:
        raise ConfigurationError(str(e)) from None


def cmd_evaluate(args):
    bbox = _bbox_arg(args.bbox)
    real = load_fs_csv(args.real, bbox)
    gen = load_fs_csv(args.generated, bbox)
    spec = codec.NormalizationSpec.from_bbox(bbox)
    report = evaluate(real, gen, spec, args.projections, args.samples, args.seed)
    text = json.dumps(asdict(report), sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_experiment(args):
    cfg = _config(args)
    reports, failures = run_experiment(cfg, _out(args, cfg), workers=args.workers)
    for r in reports:
        print(json.dumps(r.row(), sort_keys=True))
    for fold, err in sorted(failures.items()):
        print(f"fold {fold} failed: {err}", file=sys.stderr)
    if not reports:
        raise TrainingError("every fold failed")


def cmd_grad_check(args):
    kinds = args.layer or LAYER_KINDS
    worst = 0.0
    for kind in kinds:
        err = grad_check(LayerSpec(kind), seed=args.seed if args.seed is not None else 0, h=args.h)
        worst = max(worst, err)
        print(f"{kind:18s} {err:.3e} {'ok' if err < args.tol else 'FAIL'}")
    if worst >= args.tol:
        raise TrainingError(f"gradient check failed: max relative error {worst:.3e}")


def cmd_dp_account(args):
    if args.sigma is None and args.epsilon is None:
        raise ConfigurationError("give --sigma to account or --epsilon to calibrate")
    q = args.batch_size / args.n if args.q is None else args.q
    delta = args.delta if args.delta is not None else 1.0 / args.n ** 1.1
    sigma = args.sigma if args.sigma is not None else calibrate_sigma(args.epsilon, delta, q, args.steps)
    eps = account(PrivacyLedger(q, sigma, args.steps), delta)
    print(json.dumps({"q": q, "sigma": sigma, "steps": args.steps, "delta": delta, "epsilon": eps}, sort_keys=True))


def cmd_encode(args):
    bbox = _bbox_arg(args.bbox)
    ds = load_fs_csv(args.input, bbox)
    spec = codec.NormalizationSpec.from_bbox(bbox)
    codec.write_grids(_out(args), [codec.encode(t, spec, args.max_len) for t in ds])
    print(f"encoded {len(ds)} trajectories")


def cmd_decode(args):
    bbox = _bbox_arg(args.bbox)
    spec = codec.NormalizationSpec.from_bbox(bbox)
    grids = codec.read_grids(args.input)
    trajs = [codec.decode(g.values, spec, g.length, id=f"traj{i}") for i, g in enumerate(grids)]
    write_csv(codec.Dataset("decoded", trajs, bbox), _out(args))
    print(f"decoded {len(trajs)} trajectories")


def build_parser():
    p = _Parser(prog="trajcnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="TOML experiment config")
            sp.add_argument("--dp", action="store_true", help="enable DP-SGD (defaults if no [dp] table)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        return sp

    common(sub.add_parser("preprocess", help="load, filter and write a canonical dataset")).set_defaults(func=cmd_preprocess)
    common(sub.add_parser("train", help="train on the full dataset")).set_defaults(func=cmd_train)
    sp = common(sub.add_parser("experiment", help="k-fold train/generate/evaluate"))
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_experiment)

    for name, func in (("generate", cmd_generate), ("export-pointcloud", cmd_export_pointcloud)):
        sp = common(sub.add_parser(name), config=False)
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("-n", type=int, required=True)
        sp.set_defaults(func=func, seed=0)

    sp = common(sub.add_parser("evaluate", help="metrics of a generated CSV against a real CSV"), config=False)
    sp.add_argument("--real", required=True)
    sp.add_argument("--generated", required=True)
    sp.add_argument("--bbox", type=float, nargs=4, required=True, metavar=("LAT_MIN", "LAT_MAX", "LON_MIN", "LON_MAX"))
    sp.add_argument("--projections", type=int, default=100)
    sp.add_argument("--samples", type=int, default=10_000)
    sp.set_defaults(func=cmd_evaluate, seed=0)

    sp = common(sub.add_parser("grad-check", help="finite-difference check of every layer"), config=False)
    sp.add_argument("--layer", action="append", choices=LAYER_KINDS)
    sp.add_argument("--h", type=float, default=1e-5)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.set_defaults(func=cmd_grad_check)

    sp = common(sub.add_parser("dp-account", help="epsilon for (q, sigma, steps) or calibrate sigma"), config=False)
    sp.add_argument("--n", type=int, required=True, help="dataset size")
    sp.add_argument("--batch-size", type=int, default=640)
    sp.add_argument("--q", type=float, default=None)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.set_defaults(func=cmd_dp_account)

    for name, func in (("encode", cmd_encode), ("decode", cmd_decode)):
        sp = common(sub.add_parser(name), config=False)
        sp.add_argument("--input", required=True)
        sp.add_argument("--bbox", type=float, nargs=4, required=True, metavar=("LAT_MIN", "LAT_MAX", "LON_MIN", "LON_MAX"))
        sp.set_defaults(func=func)
    sub.choices["encode"].add_argument("--max-len", type=int, default=144)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ParseError, CheckpointError, FileNotFoundError, IsADirectoryError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as e:
        print(f"training failure: {e}", file=sys.stderr)
        if getattr(e, "snapshot", None):
            print(json.dumps(e.snapshot, sort_keys=True), file=sys.stderr)
        return EXIT_TRAINING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
