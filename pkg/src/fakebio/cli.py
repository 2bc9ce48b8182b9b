"""Command-line entry point: ``python3 -m fakebio <command> ...``.

Exit status is 0 on success, 1 on a usage error (bad or missing flag,
unknown config key) and 2 on a data error (unreadable or invalid input).
Every run prints the resolved configuration, including the seed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .authentication import DEFAULT_TAU_F, Matcher, load_reference_set, save_reference_set, verdict_from_match
from .biometrics import VideoPart, extract_signatures
from .errors import DataError, FakebioError, InsufficientGroups, UnknownIdentity
from .evaluation import (
    behavior_context_distributions,
    evaluate_signatures,
    reference_ablation,
    similarity_distributions,
    write_reports,
)
from .feature_store import (
    CANONICAL_STRIDE,
    CANONICAL_T,
    VideoRecord,
    load_video,
    parse_manifest,
    read_feature_file,
    split_identity_videos,
)
from .metric_learning import MsLossConfig, TrainConfig, load_checkpoint, save_checkpoint, train
from .protocol import SPLITS, enroll_signatures, reference_test_parts, training_index
from .synthetic import WorldConfig, generate_world

log = logging.getLogger("fakebio")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--config", help="key=value file overriding the defaults; flags override it")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    p.add_argument("-v", "--verbose", action="store_true")


def _windowing(p):
    p.add_argument("--t", type=int, default=CANONICAL_T, help="clip length in frames (default 100)")
    p.add_argument("--stride", type=int, default=CANONICAL_STRIDE, help="window stride in frames (default 5)")


def _splitting(p):
    p.add_argument("--split", choices=SPLITS, default="identity")
    p.add_argument("--ratio", type=float, default=0.8, help="reference fraction for --split identity")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fakebio", description="Appearance/behavior consistency face-swap detector.")
    parser.add_argument("--version", action="version", version=f"fakebio {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic world")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    d = WorldConfig()
    p.add_argument("--identities", type=int, default=d.identities)
    p.add_argument("--videos-per-identity", type=int, default=d.videos_per_identity)
    p.add_argument("--frames", type=int, default=d.frames_per_video)
    p.add_argument("--behavior-dim", type=int, default=d.behavior_dim)
    p.add_argument("--appearance-dim", type=int, default=d.appearance_dim)
    p.add_argument("--contexts", type=int, default=d.contexts)
    p.add_argument("--noise-sigma", type=float, default=d.noise_sigma)
    p.add_argument("--failed-swap-fraction", type=float, default=d.failed_swap_fraction)
    p.add_argument("--fakes-per-identity", type=int, default=d.fakes_per_identity)
    p.add_argument("--prefix", default=d.prefix, help="identity label prefix")

    p = sub.add_parser("validate", help="parse a manifest and its feature files")
    _common(p)
    p.add_argument("manifest_path", nargs="?", help="manifest file (or use --manifest)")
    p.add_argument("--manifest")

    p = sub.add_parser("train", help="train the behavior encoder")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--reference-only", action="store_true",
                   help="train only on the reference side of the split")
    _splitting(p)
    dk = TrainConfig.desk()
    p.add_argument("--t", type=int, default=dk.t)
    p.add_argument("--iterations", type=int, default=dk.iterations)
    p.add_argument("--identities-per-batch", type=int, default=dk.identities_per_batch)
    p.add_argument("--clips-per-identity", type=int, default=dk.clips_per_identity)
    p.add_argument("--learning-rate", type=float, default=dk.learning_rate)
    p.add_argument("--alpha", type=float, default=dk.loss.alpha)
    p.add_argument("--beta", type=float, default=dk.loss.beta)
    p.add_argument("--lam", type=float, default=dk.loss.lam)
    p.add_argument("--epsilon", type=float, default=dk.loss.epsilon)
    p.add_argument("--embedding-dim", type=int, default=dk.embedding_dim)
    p.add_argument("--progress-every", type=int, default=100)

    p = sub.add_parser("enroll", help="build the reference set")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="reference-set file to write")
    _splitting(p)
    _windowing(p)

    p = sub.add_parser("classify", help="classify clips as real or fake")
    _common(p)
    p.add_argument("--refs", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="verdicts CSV (default: stdout)")
    p.add_argument("--tau-f", type=float, default=DEFAULT_TAU_F)
    p.add_argument("--manifest", help="classify the test side of the split of this manifest")
    p.add_argument("--all-clips", action="store_true", help="with --manifest: every clip of every video")
    p.add_argument("--behavior", help="single video: behavior feature file")
    p.add_argument("--appearance", help="single video: appearance feature file")
    p.add_argument("--start", type=int, default=None, help="single video: classify only the clip at this frame")
    _splitting(p)
    _windowing(p)

    p = sub.add_parser("evaluate", help="run the full measurement protocol")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--tau-f", type=float, default=DEFAULT_TAU_F)
    _splitting(p)
    _windowing(p)

    p = sub.add_parser("ablate", help="reference-set size ablation")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--sizes", default="1,2,5,10,20,50", help="comma-separated clips per identity")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--tau-f", type=float, default=DEFAULT_TAU_F)
    _splitting(p)
    _windowing(p)
    return parser


def _subparser(parser, name) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config_file(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = _subparser(parser, args.command)
        known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
        values = {}
        for key, raw in read_config_file(args.config).items():
            if key not in known:
                raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                values[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    values[key] = action.type(raw) if action.type else raw
                except ValueError as exc:
                    raise UsageError(f"{args.config}: bad value for {key}: {exc}") from None
                if action.choices and values[key] not in action.choices:
                    raise UsageError(f"{args.config}: {key} must be one of {action.choices}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def print_config(args) -> None:
    items = sorted((k, v) for k, v in vars(args).items() if k != "command")
    print(f"command: {args.command}")
    for k, v in items:
        print(f"  {k} = {v}")
    sys.stdout.flush()


# --------------------------------------------------------------------------
# commands


def _manifest(args):
    return parse_manifest(args.manifest)


def cmd_synth(args) -> int:
    try:
        cfg = WorldConfig(identities=args.identities, videos_per_identity=args.videos_per_identity,
                          frames_per_video=args.frames, behavior_dim=args.behavior_dim,
                          appearance_dim=args.appearance_dim, contexts=args.contexts,
                          noise_sigma=args.noise_sigma, failed_swap_fraction=args.failed_swap_fraction,
                          fakes_per_identity=args.fakes_per_identity, seed=args.seed, prefix=args.prefix)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    man = generate_world(cfg, args.out)
    n_fake = sum(r.is_fake for r in man.records)
    print(f"wrote {len(man.records)} videos ({len(man.records) - n_fake} real, {n_fake} fake) "
          f"to {Path(args.out) / 'manifest.tsv'}")
    return 0


def cmd_validate(args) -> int:
    path = args.manifest or args.manifest_path
    if not path:
        raise UsageError("validate: a manifest path is required")
    man = parse_manifest(path)
    n_fake = sum(r.is_fake for r in man.records)
    print(f"ok: {len(man.records)} records, {len(man.identities())} identities, {n_fake} fake")
    return 0


def cmd_train(args) -> int:
    man = _manifest(args)
    records = None
    if args.reference_only:
        records = _reference_records(man, args)
    index = training_index(man, records)
    cfg = TrainConfig(iterations=args.iterations, identities_per_batch=args.identities_per_batch,
                      clips_per_identity=args.clips_per_identity, t=args.t, learning_rate=args.learning_rate,
                      seed=args.seed, embedding_dim=args.embedding_dim,
                      loss=MsLossConfig(args.alpha, args.beta, args.lam, args.epsilon))
    params, history = train(index, cfg, progress_every=args.progress_every)
    save_checkpoint(params, args.out, cfg.to_text())
    n = min(200, len(history.loss))
    if n:
        print(f"loss: first {n} mean {np.mean(history.loss[:n]):.6f}, last {n} mean "
              f"{np.mean(history.loss[-n:]):.6f}")
    print(f"wrote checkpoint {args.out}")
    return 0


def _reference_records(man, args) -> list[VideoRecord]:
    if args.split != "identity":
        raise UsageError("--reference-only needs --split identity (halves share every video)")
    return split_identity_videos(man, args.ratio, args.seed).reference


def _parts(man, args):
    return reference_test_parts(man, args.split, args.ratio, args.seed, args.t)


def cmd_enroll(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    ref_parts, _ = _parts(_manifest(args), args)
    refs = enroll_signatures(extract_signatures(params, ref_parts, args.t, args.stride))
    save_reference_set(refs, args.out)
    print(f"enrolled {len(refs)} identities, {sum(refs.counts().values())} clips -> {args.out}")
    return 0


VERDICT_COLUMNS = ["video_id", "start", "verdict", "reason", "score", "i_f", "c_f", "i_b", "c_b"]


def cmd_classify(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    matcher = Matcher(load_reference_set(args.refs))
    if args.manifest:
        man = _manifest(args)
        if args.all_clips:
            parts = [VideoPart(r, *load_video(man, r)) for r in man.records]
        else:
            parts = _parts(man, args)[1]
    elif args.behavior and args.appearance:
        b = read_feature_file(args.behavior, "clip")
        a = read_feature_file(args.appearance, "clip")
        if args.start is not None:
            b, a = b.slice(args.start, args.start + args.t), a.slice(args.start, args.start + args.t)
            if b.frames < args.t or a.frames < args.t:
                raise UsageError(f"--start {args.start} leaves fewer than {args.t} frames")
        rec = VideoRecord(Path(args.behavior).stem, "", "real", args.behavior, args.appearance)
        parts = [VideoPart(rec, b, a)]
    else:
        raise UsageError("classify: give --manifest, or both --behavior and --appearance")
    sigs = extract_signatures(params, parts, args.t, args.stride)
    records = evaluate_signatures(sigs, matcher)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else nullcontext(sys.stdout)
    with fh as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(VERDICT_COLUMNS)
        for r in records:
            v = verdict_from_match(r.match, args.tau_f)
            m = r.match
            w.writerow([r.video_id, r.start, v.label, v.reason, repr(r.score), m.i_f, repr(m.c_f), m.i_b,
                        repr(m.c_b)])
    n_fake = sum(verdict_from_match(r.match, args.tau_f).label == "fake" for r in records)
    print(f"classified {len(records)} clips: {len(records) - n_fake} real, {n_fake} fake", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    refs = load_reference_set(args.refs)
    _, test_parts = _parts(_manifest(args), args)
    sigs = extract_signatures(params, test_parts, args.t, args.stride)
    records = evaluate_signatures(sigs, refs)
    hists = {}
    fakes = sigs.subset(sigs.truth == "fake")
    if len(fakes):
        try:
            hists["vs_source"] = similarity_distributions(fakes, refs, "vs_source")
            hists["vs_target"] = similarity_distributions(fakes, refs, "vs_target")
        except UnknownIdentity as exc:
            log.warning("skipping source/target distributions: %s", exc)
    reals = sigs.subset(sigs.truth == "real")
    try:
        hists.update(behavior_context_distributions(reals.B, reals.identity, reals.context))
    except InsufficientGroups as exc:
        log.warning("skipping behavior/context distributions: %s", exc)
    report = write_reports(args.out, records, refs, args.tau_f, hists)
    sys.stdout.write(report.summary())
    return 0


def cmd_ablate(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    ref_parts, test_parts = _parts(_manifest(args), args)
    ref = extract_signatures(params, ref_parts, args.t, args.stride)
    test = extract_signatures(params, test_parts, args.t, args.stride)
    result = reference_ablation(ref, test, sizes, args.tau_f, args.trials, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clips_per_identity", "mean_accuracy"])
        for m, acc in result.items():
            w.writerow([m, repr(acc)])
            print(f"m={m:5d}  accuracy {acc:.4f}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "validate": cmd_validate,
    "train": cmd_train,
    "enroll": cmd_enroll,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def _thread_limit(n):
    if n is None:
        return nullcontext()
    return threadpool_limits(limits=n)


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:  # unreadable --config
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    print_config(args)
    if args.threads is not None and args.threads < 1:
        print("usage error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FakebioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
