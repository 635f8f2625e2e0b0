"""Command-line front end: generate, preprocess, fit-law, train-reconstruct,
compare, report. One JSON config drives the whole pipeline; artifacts land in
a stable run-directory layout (data/, checkpoints/, reports/, plots/)."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import data, strength, evaluation
from .config import load_config, config_to_dict, run_config_digest
from .data import ParseError
from .nnet.serialize import dump_json, load_json
from .nnet.tensor import NumericError
from .reconstructor import (train_reconstructor, evaluate_reconstruction,
                            save_reconstructor, load_reconstructor,
                            write_history_csv)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


def _paths(config):
    root = config.run_dir
    return {
        "root": root,
        "data": os.path.join(root, "data"),
        "clean": os.path.join(root, "data", "clean"),
        "checkpoints": os.path.join(root, "checkpoints"),
        "reports": os.path.join(root, "reports"),
        "plots": os.path.join(root, "plots"),
        "manifest": os.path.join(root, "manifest.json"),
    }


def _update_manifest(paths, config, entries):
    manifest = {}
    if os.path.exists(paths["manifest"]):
        manifest = load_json(paths["manifest"])
    manifest.setdefault("artifacts", {}).update(entries)
    manifest["config_digest"] = run_config_digest(config)
    dump_json(manifest, paths["manifest"])


def _refuse_existing(targets, force):
    existing = [t for t in targets if os.path.exists(t)]
    if existing and not force:
        raise FileExistsError(f"output exists (use --force to overwrite): "
                              f"{existing[0]}")


def _load_clean_dataset(paths):
    samples_path = os.path.join(paths["clean"], "samples.csv")
    curves_path = os.path.join(paths["clean"], "curves.csv")
    if not os.path.exists(samples_path):
        raise FileNotFoundError(f"no cleaned dataset at {samples_path}; "
                                "run 'preprocess' first")
    return data.load_dataset(samples_path, curves_path)


def cmd_generate(config, args):
    paths = _paths(config)
    syn = config.synthetic
    if args.seed is not None:
        syn = dataclasses.replace(syn, seed=args.seed)
    targets = [os.path.join(paths["data"], name)
               for name in ("samples.csv", "curves.csv", "grid.json")]
    _refuse_existing(targets, args.force)
    os.makedirs(paths["data"], exist_ok=True)
    samples = data.generate_synthetic(syn)
    data.save_dataset(samples, targets[0], targets[1])
    dump_json({"strain": samples[0].curve.grid.points.tolist()}, targets[2])
    dump_json({"planted_alpha": list(syn.planted_alpha), "seed": syn.seed,
               "n_samples": syn.n_samples, "config_digest": run_config_digest(config)},
              os.path.join(paths["data"], "dataset_manifest.json"))
    _update_manifest(paths, config, {"data/samples.csv": {"seed": syn.seed}})
    print(f"generated {len(samples)} samples -> {paths['data']}")
    return EXIT_OK


def cmd_preprocess(config, args):
    paths = _paths(config)
    samples = data.load_dataset(os.path.join(paths["data"], "samples.csv"),
                                os.path.join(paths["data"], "curves.csv"))
    kept, dropped_ids, fences = data.iqr_filter(samples)
    targets = [os.path.join(paths["clean"], "samples.csv"),
               os.path.join(paths["clean"], "curves.csv")]
    _refuse_existing(targets, args.force)
    os.makedirs(paths["clean"], exist_ok=True)
    data.save_dataset(kept, targets[0], targets[1])
    report = {
        "n_input": len(samples),
        "n_kept": len(kept),
        "dropped_ids": dropped_ids,
        "fences": {name: fences[j].tolist()
                   for j, name in enumerate(("m0", "m1", "m2", "m3"))},
        "config_digest": run_config_digest(config),
    }
    dump_json(report, os.path.join(paths["clean"], "filter_report.json"))
    _update_manifest(paths, config, {"data/clean/samples.csv": {"n_kept": len(kept)}})
    print(f"kept {len(kept)} of {len(samples)} samples "
          f"({len(dropped_ids)} dropped)")
    return EXIT_OK


def cmd_fit_law(config, args):
    paths = _paths(config)
    dataset = _load_clean_dataset(paths)
    strengths = [strength.peak_stress(s.curve) for s in dataset]
    bad = [s.id for s, v in zip(dataset, strengths) if v <= 0]
    if bad:
        raise ValueError(f"non-positive peak stress for samples: {bad}")
    law = strength.fit(data.minkowski_matrix(dataset), strengths)
    os.makedirs(paths["reports"], exist_ok=True)
    out = os.path.join(paths["reports"], "strength_law.json")
    _refuse_existing([out], args.force)
    strength.save_law(law, out)
    _update_manifest(paths, config, {"reports/strength_law.json":
                                     {"n": law.n}})
    print(f"fitted alpha = {law.alpha.tolist()} (sse={law.sse:.6g}, n={law.n})")
    return EXIT_OK


def cmd_train_reconstruct(config, args):
    paths = _paths(config)
    dataset = _load_clean_dataset(paths)
    rcfg = config.reconstructor
    if args.seed is not None:
        rcfg = dataclasses.replace(rcfg, seed=args.seed)
    ckpt = os.path.join(paths["checkpoints"], "reconstructor.json")
    history_path = os.path.join(paths["checkpoints"], "history.csv")
    _refuse_existing([ckpt, history_path], args.force)
    os.makedirs(paths["checkpoints"], exist_ok=True)

    model, history = train_reconstructor(dataset, rcfg)
    save_reconstructor(model, ckpt)
    write_history_csv(history, history_path)

    indices = data.split(len(dataset), rcfg.split_fractions, rcfg.seed)
    test_samples = [dataset[i] for i in indices.test]
    test_r2 = evaluate_reconstruction(model, test_samples, mask_seed=rcfg.seed + 1)
    os.makedirs(paths["reports"], exist_ok=True)
    dump_json({"test_r2": test_r2, "seed": rcfg.seed,
               "config_digest": run_config_digest(config)},
              os.path.join(paths["reports"], "reconstruction_eval.json"))
    _update_manifest(paths, config,
                     {"checkpoints/reconstructor.json": {"seed": rcfg.seed}})
    print(f"reconstructor trained ({len(history)} epochs), "
          f"held-out curve R^2 = {test_r2:.4f}")
    return EXIT_OK


def cmd_compare(config, args):
    paths = _paths(config)
    dataset = _load_clean_dataset(paths)
    ckpt = os.path.join(paths["checkpoints"], "reconstructor.json")
    if not os.path.exists(ckpt):
        raise FileNotFoundError(f"missing reconstructor checkpoint {ckpt}; "
                                "run 'train-reconstruct' first")
    model = load_reconstructor(ckpt)
    comparison = config.comparison
    configs = {kind: config.predictor_config(kind) for kind in comparison.kinds}
    table = evaluation.run_comparison(dataset, comparison.kinds, comparison.modes,
                                      comparison.seeds, model, configs=configs,
                                      jobs=args.jobs)
    os.makedirs(paths["reports"], exist_ok=True)
    os.makedirs(paths["plots"], exist_ok=True)
    evaluation.emit_comparison(table,
                               os.path.join(paths["reports"], "comparison.csv"),
                               timings_path=os.path.join(paths["reports"],
                                                         "timings.csv"))
    evaluation.emit_aggregates(table, os.path.join(paths["reports"],
                                                   "aggregates.csv"))
    for row in table.rows:
        name = f"report_{row.kind}_{row.domain_mode}_seed{row.seed}"
        if "json" in config.report_formats:
            evaluation.emit_report(row, os.path.join(paths["reports"],
                                                     name + ".json"),
                                   fmt="json", include_runtimes=False)
        evaluation.emit_scatter_data(row, paths["plots"],
                                     prefix=f"{row.kind}_{row.domain_mode}_"
                                            f"seed{row.seed}_")
    _update_manifest(paths, config,
                     {"reports/comparison.csv": {"seeds": list(comparison.seeds)}})
    for agg in table.aggregates:
        print(f"{agg['kind']:>13} {agg['domain_mode']:<17} "
              f"mean R^2 = {agg['mean_r2_mean']:+.4f} "
              f"[{agg['mean_r2_min']:+.4f}, {agg['mean_r2_max']:+.4f}]")
    return EXIT_OK


def cmd_report(config, args):
    paths = _paths(config)
    dataset = _load_clean_dataset(paths)
    ckpt = os.path.join(paths["checkpoints"], "reconstructor.json")
    if not os.path.exists(ckpt):
        raise FileNotFoundError(f"missing reconstructor checkpoint {ckpt}")
    model = load_reconstructor(ckpt)
    os.makedirs(paths["plots"], exist_ok=True)
    seed = args.seed if args.seed is not None else model.config.seed + 2
    written = evaluation.emit_reconstruction_examples(model, dataset,
                                                      paths["plots"],
                                                      mask_seed=seed)
    print(f"wrote {len(written)} reconstruction example files to {paths['plots']}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "preprocess": cmd_preprocess,
    "fit-law": cmd_fit_law,
    "train-reconstruct": cmd_train_reconstruct,
    "compare": cmd_compare,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stressinv",
        description="Curve reconstruction and microstructure inversion pipeline")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="path to run config JSON")
    parser.add_argument("--run-dir", default=None, help="override the run directory")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel cells for compare (results are "
                             "job-count invariant)")
    parser.add_argument("--force", action="store_true",
                        help="overwrite existing artifacts")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = {"run_dir": args.run_dir} if args.run_dir else None
        config = load_config(args.config, overrides=overrides)
        return COMMANDS[args.command](config, args)
    except (ValueError, ParseError, FileExistsError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, NumericError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
