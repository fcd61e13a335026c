"""k-fold experiment pipeline: load -> split -> train -> generate -> evaluate.

Output layout of one run (``out``)::

    manifest.json        resolved config, input hashes, seeds
    report.csv           one row per fold + mean±std aggregate row
    report.json          per-fold reports and failed folds
    fold_<i>/train_log.jsonl, fold_<i>/generator.ckpt, fold_<i>/report.json

Nothing time-dependent is written, so reruns are byte-identical.
"""
import concurrent.futures
import hashlib
import json
import logging
import os
from dataclasses import asdict

import numpy as np

from . import codec
from .data import load_fs_csv, load_geolife, preprocess, split_folds
from .errors import TrainingError
from .gan import generate, train
from .metrics import evaluate, n_generated_for, reports_to_csv
from .nn import save_checkpoint
from .toy import SyntheticToySpec, make_toy_dataset

log = logging.getLogger(__name__)


def load_dataset(dcfg):
    """Load and preprocess the dataset described by a :class:`DatasetConfig`."""
    bbox = dcfg.resolved_bbox()
    if dcfg.kind == "toy":
        t = dcfg.toy
        spec = SyntheticToySpec(tuple(map(tuple, t.centers)), t.spread, t.step, t.per_cluster, t.length, t.seed)
        ds = make_toy_dataset(spec, bbox)
    elif dcfg.kind in ("fs", "canonical"):
        ds = load_fs_csv(dcfg.path, bbox, name=dcfg.kind)
    else:
        ds = load_geolife(dcfg.path, bbox)
    return preprocess(ds, bbox, dcfg.max_len, dcfg.min_len)


def dataset_summary(ds):
    lengths = ds.lengths() if len(ds) else np.zeros(0, int)
    hist = {str(k): int(v) for k, v in zip(*np.unique(lengths, return_counts=True))}
    return {
        "name": ds.name,
        "trajectories": len(ds),
        "points": int(ds.n_points),
        "min_length": int(lengths.min()) if len(lengths) else 0,
        "max_length": int(lengths.max()) if len(lengths) else 0,
        "length_histogram": hist,
        "bbox": ds.bbox.as_dict(),
    }


def _blob_hash(path):
    """git blob id: sha1 over ``blob <size>\\0`` + content."""
    with open(path, "rb") as fh:
        data = fh.read()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def content_hash(path):
    """Content hash of a file, or of a directory tree (sorted relative paths)."""
    if path is None:
        return None
    if os.path.isfile(path):
        return _blob_hash(path)
    h = hashlib.sha1()
    for root, dirs, files in os.walk(path):
        dirs.sort()
        for f in sorted(files):
            p = os.path.join(root, f)
            h.update(f"{os.path.relpath(p, path)} {_blob_hash(p)}\n".encode())
    return h.hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")


def manifest(cfg, extra=None):
    m = {
        "config": cfg.as_dict(),
        "inputs": {"dataset": cfg.dataset.path, "content_hash": content_hash(cfg.dataset.path)},
        "seeds": {
            "seed": cfg.seed, "train": cfg.train.seed, "folds": cfg.experiment.seed,
            "generation": cfg.experiment.generation_seed, "metrics": cfg.metrics.seed,
            "toy": cfg.dataset.toy.seed if cfg.dataset.kind == "toy" else None,
        },
    }
    m.update(extra or {})
    return m


def train_and_save(cfg, ds, spec, out_dir, use_dp=True):
    """Train on ``ds`` writing ``train_log.jsonl`` and ``generator.ckpt`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "train_log.jsonl")
    if os.path.exists(log_path):
        os.remove(log_path)
    result = train(cfg.train, ds, spec, dp=cfg.dp if use_dp else None, log_path=log_path)
    meta = {"generator": asdict(result.generator.config), "spec": spec.as_dict(),
            "max_len": cfg.train.max_len, "steps": cfg.train.steps}
    save_checkpoint(os.path.join(out_dir, "generator.ckpt"), result.generator, meta)
    return result


def run_fold(cfg, train_ds, test_ds, spec, fold, out_dir):
    result = train_and_save(cfg, train_ds, spec, out_dir)
    n = n_generated_for(test_ds, codec.grid_side(cfg.train.max_len) ** 2)
    gen = generate(result.generator, n, cfg.experiment.generation_seed + fold, spec)
    meta = {"fold": fold, "steps": cfg.train.steps, "seed": cfg.train.seed}
    if result.ledger is not None:
        meta.update(epsilon=result.epsilon, delta=result.delta, sigma=result.ledger.sigma,
                    clip_norm=cfg.dp.clip_norm, dp_steps=result.ledger.steps)
    m = cfg.metrics
    report = evaluate(test_ds, gen, spec, m.n_projections, m.swd_samples, m.seed, meta)
    write_json(os.path.join(out_dir, "report.json"), asdict(report))
    return report


def _fold_worker(args):
    cfg, train_ds, test_ds, spec, fold, out_dir = args
    try:
        return fold, run_fold(cfg, train_ds, test_ds, spec, fold, out_dir), None
    except (TrainingError, ValueError, ArithmeticError) as e:
        return fold, None, f"{type(e).__name__}: {e}"


def run_experiment(cfg, out=None, workers=1, dataset=None):
    """Run all folds; a failing fold is recorded and the others continue.

    Returns ``(reports, failures)`` where ``failures`` maps fold -> message.
    """
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    ds = dataset if dataset is not None else load_dataset(cfg.dataset)
    spec = codec.NormalizationSpec.from_bbox(ds.bbox)
    write_json(os.path.join(out, "manifest.json"), manifest(cfg, {"dataset": dataset_summary(ds)}))
    folds = split_folds(ds, cfg.experiment.folds, cfg.experiment.seed)
    jobs = [(cfg, tr, te, spec, i, os.path.join(out, f"fold_{i}")) for i, (tr, te) in enumerate(folds)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_fold_worker, jobs))
    else:
        results = [_fold_worker(j) for j in jobs]
    reports, failures = [], {}
    for fold, report, err in sorted(results, key=lambda r: r[0]):
        if err is None:
            reports.append(report)
        else:
            log.error("fold %d failed: %s", fold, err)
            failures[fold] = err
    with open(os.path.join(out, "report.csv"), "w", newline="") as fh:
        fh.write(reports_to_csv(reports))
    write_json(os.path.join(out, "report.json"),
               {"folds": [asdict(r) for r in reports], "failed_folds": {str(k): v for k, v in failures.items()}})
    return reports, failures
