"""Command-line interface: gen | train | eval | infer | gradcheck | bench | params.

Exit codes: 0 ok, 1 failed check or non-finite loss, 2 usage, 3 missing file,
4 malformed manifest/config, 5 checkpoint format/version mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_FORMAT = 4
EXIT_VERSION = 5


def _print_config(args, extra=None):
    shown = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    if extra:
        shown.update(extra)
    print("resolved config: " + json.dumps(shown, sort_keys=True, default=str))


def _resolve_model_config(args):
    from .stateformer import PRESETS, StateformerConfig

    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            return StateformerConfig.from_text(fh.read())
    return PRESETS[args.preset]


# -- gen ---------------------------------------------------------------------


def _parse_span(text):
    lo, _, hi = text.partition(":")
    return float(lo), float(hi) if hi else float(lo)


def _render_one(task):
    from . import scenegen
    from .features import write_wav
    from .numerics import Rng

    (master_seed, split, index, ranges, sources, reflections, out_dir) = task
    rng = Rng(master_seed).child(split).child(index)
    scene = scenegen.sample_scene(
        rng, ranges, n_sources=sources, seed=int(rng.integers(0, 2**31 - 1))
    )
    clip = scenegen.render_scene(scene, reflections=reflections)
    wav_rel = os.path.join(split, f"clip_{index:05d}.wav")
    lab_rel = os.path.join(split, f"clip_{index:05d}.labels.tns")
    write_wav(os.path.join(out_dir, wav_rel), clip.waveform)
    scenegen.save_labels(os.path.join(out_dir, lab_rel), clip)
    return {"wav": wav_rel, "labels": lab_rel, "scene": scene.to_dict()}


def cmd_gen(args):
    from . import scenegen

    snr = _parse_span(args.snr)
    kinds = ("white", "pink", "diffuse") if args.noise == "mix" else (args.noise,)
    ranges = scenegen.SceneRanges(snr=snr, noise_kinds=kinds, duration_s=args.duration)
    _print_config(args)
    os.makedirs(args.out, exist_ok=True)
    splits = [("train", args.train), ("val", args.val), ("test", args.test)]
    for split, count in splits:
        os.makedirs(os.path.join(args.out, split), exist_ok=True)
        tasks = [
            (args.seed, split, i, ranges, args.sources, args.reflections, args.out)
            for i in range(count)
        ]
        if args.jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                records = list(pool.map(_render_one, tasks))
        else:
            records = [_render_one(t) for t in tasks]
        scenegen.write_manifest(os.path.join(args.out, f"{split}.jsonl"), records)
        print(f"wrote {count} clips to {os.path.join(args.out, split)}")
    return EXIT_OK


# -- train ---------------------------------------------------------------------


def cmd_train(args):
    from . import scenegen, training

    cfg = _resolve_model_config(args)
    _print_config(args, {"model_config": cfg})
    train_recs = scenegen.read_manifest(os.path.join(args.data, "train.jsonl"))
    val_recs = scenegen.read_manifest(os.path.join(args.data, "val.jsonl"))
    train_set = training.ClipDataset(train_recs, args.data, cfg.max_sources)
    val_set = training.ClipDataset(val_recs, args.data, cfg.max_sources)
    from .stateformer import build_model

    model = build_model(cfg, seed=args.seed)
    tc = training.TrainConfig(
        lr0=args.lr, epochs=args.epochs, batch=args.batch, seed=args.seed,
        crop=args.crop if args.crop > 0 else None,
    )
    training.train_loop(model, train_set, val_set, tc, args.out)
    print(f"saved checkpoint and history under {args.out}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def cmd_eval(args):
    from . import scenegen, training

    _print_config(args)
    model, meta = training.load_checkpoint(args.ckpt)
    records = scenegen.read_manifest(args.data)
    root = os.path.dirname(os.path.abspath(args.data))
    dataset = training.ClipDataset(records, root, model.cfg.max_sources)
    report = training.evaluate(model, dataset)
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    print(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    return EXIT_OK


# -- infer -------------------------------------------------------------------------


def cmd_infer(args):
    from .features import StftConfig, features_from_waveform, read_wav
    from .numerics import no_grad
    from .training import cartesian_to_azimuth, load_checkpoint

    _print_config(args)
    model, _ = load_checkpoint(args.ckpt)
    _, wav = read_wav(args.wav)
    if wav.shape[0] != 2:
        print(f"error: expected 2-channel input, got {wav.shape[0]}", file=sys.stderr)
        return EXIT_BAD_FORMAT
    cfg = StftConfig()
    feats = features_from_waveform(wav, cfg)
    model.eval()
    with no_grad():
        pred = model(feats).data
    az = cartesian_to_azimuth(pred)  # (T, S)
    lines = ["frame_time_s\taz1_deg\taz2_deg"]
    for t in range(az.shape[0]):
        cells = "\t".join(f"{az[t, s]:.4f}" for s in range(az.shape[1]))
        lines.append(f"{cfg.frame_center_time(t):.4f}\t{cells}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return EXIT_OK


# -- gradcheck / bench / params ------------------------------------------------------


def cmd_gradcheck(args):
    from .gradsuite import run_all

    _print_config(args)
    ok = run_all(seed=args.seed)
    print("gradcheck:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_bench(args):
    from .bench import format_table, run_bench

    _print_config(args)
    rows, slopes = run_bench(seed=args.seed)
    table = format_table(rows, slopes)
    print(table, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    return EXIT_OK


def cmd_params(args):
    from .stateformer import build_model

    cfg = _resolve_model_config(args)
    _print_config(args, {"model_config": cfg})
    model = build_model(cfg, seed=args.seed)
    for name, count in model.param_groups().items():
        print(f"{name}\t{count}")
    print(f"total\t{model.param_count()}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="doaformer",
        description="Sound-source DOA estimation: synthetic scenes, training, "
        "evaluation, inference, gradient audit, and kernel benchmarks.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render a synthetic dataset")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--train", type=int, default=205)
    g.add_argument("--val", type=int, default=20)
    g.add_argument("--test", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sources", type=int, choices=(1, 2), default=1)
    g.add_argument("--reflections", type=int, choices=(0, 1), default=1)
    g.add_argument("--duration", type=float, default=4.0, help="clip length in seconds")
    g.add_argument("--snr", default="-5:15", help="SNR range dB, LO:HI")
    g.add_argument("--noise", choices=("white", "pink", "diffuse", "mix"), default="mix")
    g.add_argument("--jobs", type=int, default=1, help="parallel render processes")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    t.add_argument("--data", required=True, help="dataset dir with train/val manifests")
    t.add_argument("--out", required=True, help="output dir for checkpoint + history")
    t.add_argument("--config", help="model config file (key value lines)")
    t.add_argument("--preset", choices=("full", "desk"), default="full")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=80)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--crop", type=int, default=128,
                   help="training frame window (0 trains full clips)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a manifest")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True, help="manifest (.jsonl) path")
    e.add_argument("--out", help="write the JSON report here too")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="azimuth tracks for one 2-channel WAV")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--wav", required=True)
    i.add_argument("--out", help="output track file (default stdout)")
    i.set_defaults(func=cmd_infer)

    gc = sub.add_parser("gradcheck", help="finite-difference audit of all ops/blocks")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)

    b = sub.add_parser("bench", help="scan vs attention timing over sequence lengths")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="write the table here too")
    b.set_defaults(func=cmd_bench)

    pr = sub.add_parser("params", help="parameter counts per component")
    pr.add_argument("--config")
    pr.add_argument("--preset", choices=("full", "desk"), default="full")
    pr.add_argument("--seed", type=int, default=0)
    pr.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    from .numerics.checkpoint import CheckpointFormatError, CheckpointVersionError
    from .scenegen import ManifestError
    from .training import EmptyDatasetError, NanLossError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except CheckpointVersionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERSION
    except CheckpointFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VERSION
    except (ManifestError, EmptyDatasetError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_FORMAT
    except NanLossError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
