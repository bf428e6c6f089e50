"""Snoring detection and detection-gated subband cancellation tools.

Errors are reported as a single line ``error: <kind>: <message>`` on stderr.
Exit codes: 0 success, 1 run finished with failed rows, 2 usage or input error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import files, harness, sad, synth
from .hangover import HangoverParams, hangover
from .metrics import format_db, lsd, misalignment
from .weights import WeightFormatError, load_weights

EXIT_OK = 0
EXIT_FAILED_ROWS = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _need_file(path, what):
    if not Path(path).is_file():
        raise UsageError(f"{what}: no such file: {path}")
    return path


def cmd_synth(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.count)
    for i, seed in enumerate(seeds):
        profile = synth.SnoreProfile(snore_ratio=args.ratio, seed=int(seed))
        x, ann = synth.generate(profile, args.duration, args.fs)
        stem = out / f"snore_{i:03d}"
        files.write_wav(stem.with_suffix(".wav"), x, args.fs)
        files.write_annotations(stem.with_suffix(".csv"), ann)
        ratio = sum(e - s for s, e in ann) / args.duration
        print(f"{stem.with_suffix('.wav')} events={len(ann)} snore_ratio={ratio:.4f}")
    return EXIT_OK


def cmd_detect(args):
    data, fs = files.read_wav(_need_file(args.input, "input"))
    x = harness.mono(data)
    if args.detector == "energy":
        feats = sad.logmel(x, fs)
        bits = sad.energy_detector(feats, args.threshold)
    else:
        w = load_weights(_need_file(args.weights, "weights"))
        feats = sad.logmel(x, fs, n_mels=w.n_mels, win_ms=w.win_ms, hop_ms=w.hop_ms)
        probs = sad.crnn_forward(feats, w)
        if args.probabilities:
            Path(args.probabilities).write_text("".join(f"{p!r}\n" for p in probs.tolist()))
        bits = sad.binarize(probs)
    if args.hangover:
        bits = hangover(bits, HangoverParams(k=args.k, X=args.X))
    files.write_predictions(args.output, bits, binary=args.binary)
    print(f"frames={bits.size} ones={int(bits.sum())}")
    return EXIT_OK


def cmd_hangover(args):
    bits = files.read_predictions(_need_file(args.input, "input"))
    out = hangover(bits, HangoverParams(k=args.k, X=args.X))
    files.write_predictions(args.output, out, binary=args.binary)
    print(f"frames={out.size} ones_in={int(bits.sum())} ones_out={int(out.sum())}")
    return EXIT_OK


def _experiment_config(args):
    data = {}
    if args.config:
        data = files.load_config(_need_file(args.config, "config"))
    overrides = {
        "seed": args.seed, "jobs": args.jobs, "output_dir": args.out_dir,
        "duration_s": args.duration, "detector": args.detector, "threshold": args.threshold,
        "weights": args.weights, "input_wav": args.input, "annotations": args.annotations,
        "p_path": args.p, "s_path": args.s,
        "use_hangover": False if args.no_hangover else None,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return harness.ExperimentConfig.from_dict(data)


def _run_and_report(cfg):
    rows, inputs = harness.run_experiment(cfg)
    out = harness.write_outputs(cfg, rows, inputs)
    failed = 0
    for r in rows:
        if r.status == "ok":
            print(f"snr={r.snr_db:g} mode={r.sad_mode} lsd={r.lsd_db:.4f} dB misalignment={format_db(r.misalignment_db)}")
        else:
            failed += 1
            print(f"snr={r.snr_db:g} mode={r.sad_mode} status=failed {r.diagnostic}")
    print(f"results={out / 'results.csv'}")
    return EXIT_FAILED_ROWS if failed else EXIT_OK


def cmd_experiment(args):
    cfg = _experiment_config(args)
    if args.snr:
        cfg.snr_list_db = args.snr
    if args.mode:
        cfg.sad_mode = args.mode
    return _run_and_report(cfg)


def cmd_cancel(args):
    cfg = _experiment_config(args)
    cfg.snr_list_db = [args.snr]
    cfg.sad_mode = args.mode
    return _run_and_report(cfg)


def cmd_metrics(args):
    p = files.read_ir(_need_file(args.p, "p"))
    w = files.read_ir(_need_file(args.w, "w"))
    print(f"lsd {lsd(p, w):.4f} dB")
    print(f"misalignment {format_db(misalignment(p, w))}")
    return EXIT_OK


def _add_run_options(sp):
    sp.add_argument("--config", help="TOML or JSON experiment config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--out-dir")
    sp.add_argument("--duration", type=float, help="synthetic input length in seconds")
    sp.add_argument("--input", help="reference WAV instead of synthetic snoring")
    sp.add_argument("--annotations", help="start_s,end_s CSV for the oracle detector")
    sp.add_argument("--detector", choices=["oracle", "energy", "crnn"])
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--weights")
    sp.add_argument("--p", help="primary path IR (.wav or .f32)")
    sp.add_argument("--s", help="secondary path IR (.wav or .f32)")
    sp.add_argument("--no-hangover", action="store_true", help="gate on raw detector output")


def build_parser():
    parser = _Parser(prog="snorecancel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", help="generate synthetic snoring WAVs with annotations")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--duration", type=float, default=600.0)
    sp.add_argument("--ratio", type=float, default=0.128)
    sp.add_argument("--fs", type=int, default=44100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("detect", help="WAV -> per-frame snore predictions")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--detector", choices=["energy", "crnn"], default="energy")
    sp.add_argument("--threshold", type=float, default=-6.0, help="energy threshold, natural-log units")
    sp.add_argument("--weights")
    sp.add_argument("--probabilities", help="also write CRNN probabilities here")
    sp.add_argument("--hangover", action="store_true", help="post-process with hangover")
    sp.add_argument("--k", type=int, default=100)
    sp.add_argument("--X", type=int, default=3)
    sp.add_argument("--binary", action="store_true", help="bit-packed output")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("hangover", help="post-process a prediction stream")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--k", type=int, default=100)
    sp.add_argument("--X", type=int, default=3)
    sp.add_argument("--binary", action="store_true")
    sp.set_defaults(func=cmd_hangover)

    sp = sub.add_parser("cancel", help="single cancellation run")
    _add_run_options(sp)
    sp.add_argument("--snr", type=float, default=20.0)
    sp.add_argument("--mode", choices=["on", "off"], default="on")
    sp.set_defaults(func=cmd_cancel)

    sp = sub.add_parser("experiment", help="SNR x SAD-mode sweep")
    _add_run_options(sp)
    sp.add_argument("--snr", type=float, nargs="+")
    sp.add_argument("--mode", choices=["on", "off", "both"])
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("metrics", help="LSD and misalignment between two IRs")
    sp.add_argument("--p", required=True)
    sp.add_argument("--w", required=True)
    sp.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "detector", None) == "crnn" and not getattr(args, "weights", None) and args.command == "detect":
            raise UsageError("--detector crnn needs --weights")
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except harness.ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WeightFormatError as exc:
        print(f"error: weights: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: input: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
