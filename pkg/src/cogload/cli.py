"""``cogload`` command line.

Subcommands share ``--config``, ``--set section.key=value``, ``--seed``,
``--jobs``, ``--run-dir`` and ``--log-level``. Precedence, lowest first:
built-in defaults, the config file, ``--set`` overrides, dedicated flags.
Each command writes its artifacts under the run directory together with a
``manifest_<command>.json`` holding the effective config, its digest, the
input dataset hashes, output hashes and metrics.

Exit status: 0 on success, otherwise the ``exit_code`` of the error family
(see :mod:`cogload.errors`).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__, workflow
from .aggregate import VoteTable, read_predictions_csv, write_predictions_csv
from .benchmark import BENCH_OVERRIDES, run_benchmark, write_benchmark_csv
from .config import load_config
from .data import export_recordings, synth_generate, write_manifest
from .errors import CheckpointError, CogloadError, ConfigError, EvalError
from .evalharness import accuracy, macro_f1, run_experiment
from .features import compute_norm_stats, write_feature_csv, zscore_normalize
from .model import load_model, pretrain, save_model
from .pipeline import all_tokens, sequence_array

log = logging.getLogger("cogload")

# Scheduler grid rows as printed: (learning rate, first value, second value).
SCHEDULER_GRID = ((1e-4, 250, 0.75), (1e-5, 250, 0.75), (1e-4, 100, 0.5), (1e-4, 150, 0.5))
ABLATION_GRIDS = {
    "blocks": [("encoder.n_blocks", v) for v in (3, 4, 5)],
    "heads": [("downstream.head", v) for v in ("A1", "A2", "A3")],
    "posenc": [("encoder.positional_encoding", v) for v in (True, False)],
}


# --- helpers ---------------------------------------------------------------

def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_curve(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(curve, start=1):
            w.writerow([i, repr(float(v))])


def _pretrain(cfg, pre_tok):
    stats = compute_norm_stats(all_tokens(pre_tok))
    X, _, _ = sequence_array(pre_tok, stats)
    run, head = workflow.pretrain_configs(cfg)
    model, curve = pretrain(X, run, enc=workflow.encoder_config(cfg), head=head)
    return model, curve, stats, len(X)


def _load_pretrained(cfg):
    path = workflow.checkpoint_path(cfg)
    if not path.exists():
        raise CheckpointError(f"pre-trained checkpoint {path} not found; run 'cogload pretrain' "
                              "or set downstream.supervised = true")
    return load_model(path)


def _arm(cfg):
    d = cfg["downstream"]
    if d["supervised"]:
        return "supervised"
    return "frozen" if d["freeze"] else "finetuned"


def _scheduler_rows(order):
    if order not in ("step_gamma", "gamma_step"):
        raise ConfigError(f"[ablate] scheduler_order must be step_gamma or gamma_step, got {order!r}")
    rows = []
    for lr, a, b in SCHEDULER_GRID:
        step, gamma = (a, b) if order == "step_gamma" else (b, a)
        if step != int(step) or not 0.0 < gamma <= 1.0:
            raise ConfigError(f"scheduler row lr={lr}, step={step}, gamma={gamma} is not a valid step decay; "
                              "use scheduler_order = step_gamma")
        rows.append((f"lr={lr:g},step={int(step)},gamma={gamma:g}",
                     {"downstream.lr": lr, "downstream.scheduler_step": int(step),
                      "downstream.scheduler_gamma": float(gamma), "downstream.freeze": False}))
    return rows


# --- commands --------------------------------------------------------------

def cmd_synth(cfg, args):
    run_dir = workflow.ensure_dir(cfg["run"]["run_dir"])
    data_dir = workflow.ensure_dir(run_dir / "data")
    pre_spec, down_spec = workflow.synth_specs(cfg)
    datasets = {
        cfg["data"]["pretrain_dataset"]: export_recordings(synth_generate(pre_spec), data_dir, cfg["data"]["pretrain_dataset"]),
        cfg["data"]["downstream_dataset"]: export_recordings(synth_generate(down_spec), data_dir, cfg["data"]["downstream_dataset"]),
    }
    manifest = data_dir / "manifest.json"
    write_manifest(manifest, datasets)
    outputs = [manifest] + [data_dir / e[k] for entries in datasets.values() for e in entries
                            for k in ("path", "labels") if k in e]
    workflow.write_run_manifest(run_dir, "synth", cfg, outputs)
    print(f"wrote {sum(len(v) for v in datasets.values())} recordings and {manifest}")
    return 0


def cmd_featdump(cfg, args):
    run_dir = workflow.ensure_dir(cfg["run"]["run_dir"])
    name = args.dataset or cfg["data"]["downstream_dataset"]
    toks, hashes = workflow.load_tokenized(cfg, name)
    normed, stats = zscore_normalize(all_tokens(toks))
    feat_path, stats_path = run_dir / "features.csv", run_dir / "norm_stats.json"
    write_feature_csv(feat_path, normed)
    stats.save(stats_path)
    workflow.write_run_manifest(run_dir, "featdump", cfg, [feat_path, stats_path], hashes,
                                extra={"dataset": name, "n_tokens": len(normed)})
    print(f"wrote {len(normed)} feature rows to {feat_path}")
    return 0


def cmd_pretrain(cfg, args):
    run_dir = workflow.ensure_dir(cfg["run"]["run_dir"])
    pre_tok, hashes = workflow.load_tokenized(cfg, cfg["data"]["pretrain_dataset"])
    model, curve, stats, n_seq = _pretrain(cfg, pre_tok)
    ckpt, curve_path, stats_path = run_dir / "pretrain.ckpt", run_dir / "loss_curve.csv", run_dir / "pretrain_norm_stats.json"
    save_model(ckpt, model, {"stage": "pretrain", "config_digest": cfg.digest()})
    _write_curve(curve_path, curve)
    stats.save(stats_path)
    metrics = {"n_sequences": n_seq, "epochs": len(curve)}
    if curve:
        metrics.update(first_loss=curve[0], final_loss=curve[-1])
    workflow.write_run_manifest(run_dir, "pretrain", cfg, [ckpt, curve_path, stats_path], hashes, metrics)
    print(f"pre-trained on {n_seq} sequences for {len(curve)} epochs; checkpoint {ckpt}")
    return 0


def cmd_transfer(cfg, args):
    arm = _arm(cfg)
    out_dir = workflow.ensure_dir(Path(cfg["run"]["run_dir"]) / arm)
    exp = workflow.experiment_config(cfg)
    pretrained = None if arm == "supervised" else _load_pretrained(cfg)
    toks, hashes = workflow.load_tokenized(cfg, cfg["data"]["downstream_dataset"])
    metrics, folds = run_experiment(toks, pretrained, exp, keep_models=True)
    fold_dir = workflow.ensure_dir(out_dir / "folds")
    outputs = [out_dir / "metrics.csv", out_dir / "metrics.json", out_dir / "predictions.csv"]
    metrics.write_csv(outputs[0])
    metrics.write_json(outputs[1], {"arm": arm})
    merged, truth = VoteTable(), {}
    for fr in folds:
        ckpt = fold_dir / f"fold{fr.fold}.ckpt"
        save_model(ckpt, fr.model, {"stage": arm, "fold": fr.fold, "test_groups": fr.test_groups})
        curve = fold_dir / f"fold{fr.fold}_loss.csv"
        _write_curve(curve, fr.loss_curve)
        outputs += [ckpt, curve]
        if exp.group_by != "sequence":
            for key, votes in fr.votes.votes.items():
                merged.votes[key].extend(votes)
            truth.update(fr.truth)
    write_predictions_csv(outputs[2], merged, truth)
    if pretrained is not None:
        hashes["checkpoint"] = workflow.file_sha256(workflow.checkpoint_path(cfg))
    workflow.write_run_manifest(out_dir, "transfer", cfg, outputs, hashes, metrics.summary(), {"arm": arm})
    s = metrics.summary()
    print(f"{arm}: accuracy {s['accuracy']:.2f} ({s['accuracy_std']:.3f}), "
          f"macro F1 {s['macro_f1']:.2f} ({s['macro_f1_std']:.3f}) over {s['folds']} folds")
    return 0


def cmd_ablate(cfg, args):
    study = cfg["ablate"]["study"]
    run_dir = workflow.ensure_dir(cfg["run"]["run_dir"])
    if study == "scheduler":
        rows = _scheduler_rows(cfg["ablate"]["scheduler_order"])
    elif study in ABLATION_GRIDS:
        rows = [(f"{k.split('.')[1]}={v}", {k: v}) for k, v in ABLATION_GRIDS[study]]
    else:
        raise ConfigError(f"[ablate] study must be one of blocks, heads, posenc, scheduler; got {study!r}")
    down_tok, hashes = workflow.load_tokenized(cfg, cfg["data"]["downstream_dataset"])
    retrain = study in ("blocks", "posenc")
    if retrain:
        pre_tok, pre_hashes = workflow.load_tokenized(cfg, cfg["data"]["pretrain_dataset"])
        hashes.update(pre_hashes)
    else:
        shared = _load_pretrained(cfg)
    out = run_dir / f"ablation_{study}.csv"
    results = []
    for setting, changes in rows:
        row_cfg = cfg.updated(changes)
        model = _pretrain(row_cfg, pre_tok)[0] if retrain else shared
        exp = workflow.experiment_config(row_cfg)
        metrics, _ = run_experiment(down_tok, model, exp)
        s = metrics.summary()
        log.info("%s %s: %s", study, setting, s)
        results.append([study, setting, s["accuracy"], s["accuracy_std"], s["macro_f1"], s["macro_f1_std"]])
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["study", "setting", "accuracy", "accuracy_std", "macro_f1", "macro_f1_std"])
        w.writerows(results)
    workflow.write_run_manifest(run_dir, f"ablate_{study}", cfg, [out], hashes,
                                {r[1]: {"accuracy": r[2], "macro_f1": r[4]} for r in results})
    for r in results:
        print(f"{r[1]:>32}  accuracy {r[2]:.2f}  macro F1 {r[4]:.2f}")
    return 0


def cmd_eval(cfg, args):
    path = args.predictions or cfg["eval"]["predictions"]
    if not path:
        raise ConfigError("eval needs --predictions or [eval] predictions")
    rows = read_predictions_csv(path)
    if not rows:
        raise EvalError(f"{path} has no scored segments")
    if any(gt is None for *_, gt in rows):
        raise EvalError(f"{path}: every row needs a ground_truth value")
    pred, truth = [r[2] for r in rows], [r[3] for r in rows]
    result = {"accuracy": round(100 * accuracy(pred, truth), 4), "macro_f1": round(100 * macro_f1(pred, truth), 4),
              "n_segments": len(rows)}
    run_dir = workflow.ensure_dir(cfg["run"]["run_dir"])
    out = run_dir / "eval.json"
    _write_json(out, result)
    workflow.write_run_manifest(run_dir, "eval", cfg, [out], {"predictions": workflow.file_sha256(path)}, result)
    print(f"accuracy {result['accuracy']:.2f}  macro F1 {result['macro_f1']:.2f}  ({len(rows)} segments)")
    return 0


def cmd_bench(cfg, args):
    run_dir = workflow.ensure_dir(cfg["run"]["run_dir"])
    seeds = tuple(int(s) for s in args.seeds.split(","))
    results, summary = run_benchmark(cfg, seeds)
    csv_path, json_path = run_dir / "bench.csv", run_dir / "bench.json"
    write_benchmark_csv(csv_path, results)
    _write_json(json_path, summary)
    workflow.write_run_manifest(run_dir, "bench", cfg, [csv_path, json_path], metrics=summary)
    print(f"frozen  accuracy {summary['frozen_accuracy']:.2f}  macro F1 {summary['frozen_macro_f1']:.2f}")
    print(f"superv. accuracy {summary['supervised_accuracy']:.2f}  macro F1 {summary['supervised_macro_f1']:.2f}")
    print(f"gap     accuracy {summary['gap_accuracy']:+.2f}  macro F1 {summary['gap_macro_f1']:+.2f}")
    return 0


def cmd_config(cfg, args):
    sys.stdout.write(cfg.to_ini())
    print(f"# digest {cfg.digest()}")
    return 0


COMMANDS = {
    "synth": (cmd_synth, "generate synthetic pre-training and downstream corpora"),
    "featdump": (cmd_featdump, "write normalized feature tokens and their statistics"),
    "pretrain": (cmd_pretrain, "masked-reconstruction pre-training"),
    "transfer": (cmd_transfer, "cross-validated transfer (frozen, fine-tuned or supervised)"),
    "ablate": (cmd_ablate, "ablation sweep over blocks, heads, scheduler or positional encoding"),
    "eval": (cmd_eval, "score a predictions CSV"),
    "bench": (cmd_bench, "frozen vs. supervised synthetic transfer benchmark"),
    "config": (cmd_config, "print the effective configuration"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (run.seed)")
    common.add_argument("--jobs", type=int, help="parallel fold workers (run.jobs)")
    common.add_argument("--run-dir", help="output directory (run.run_dir)")
    common.add_argument("--log-level", help="logging level (run.log_level)")
    parser = argparse.ArgumentParser(prog="cogload", description="EEG cognitive-load transfer pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "featdump":
            p.add_argument("--dataset", help="manifest dataset to dump (default: data.downstream_dataset)")
        elif name == "eval":
            p.add_argument("--predictions", help="predictions CSV (eval.predictions)")
        elif name == "bench":
            p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    return parser


def resolve_config(args):
    overrides = list(args.set)
    if args.command == "bench":
        overrides = list(BENCH_OVERRIDES) + overrides
    for flag, key in (("seed", "run.seed"), ("jobs", "run.jobs"), ("run_dir", "run.run_dir"),
                      ("log_level", "run.log_level")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    return load_config(args.config, overrides)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        level = logging.getLevelName(cfg["run"]["log_level"].upper())
        if not isinstance(level, int):
            raise ConfigError(f"[run] log_level {cfg['run']['log_level']!r} is not a logging level")
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command][0](cfg, args)
    except CogloadError as exc:
        print(f"cogload {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
