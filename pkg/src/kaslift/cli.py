"""Command-line entry point: ``kaslift {synth,train,eval,infer,gradcheck,selftest}``.

Exit status 0 on success, 1 on validation errors (bad flags, missing or
malformed files), 2 on numerical failures (divergence, gradient check).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import autograd as ag
from .config import ModelConfig, TrainConfig, format_config, load_config
from .container import ContainerError
from .gradcheck import grouped, model_check, op_suite
from .metrics import ClipMetrics, UnalignableFrameError, mpjpe, p_mpjpe, report
from .model import default_tables, load_checkpoint, model_forward, save_checkpoint
from .skeleton import ClipPair, center_on_root, load_clip, save_clip
from .synth import make_suite
from .training import DivergenceError, fit, predict, stack_pairs, write_history

log = logging.getLogger("kaslift")

OP_TOL = 1e-4
MODEL_TOL = 1e-3


class ValidationError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _configs(args) -> tuple[ModelConfig, TrainConfig]:
    if args.config:
        if not Path(args.config).is_file():
            raise ValidationError(f"--config: no such file: {args.config}")
        mc, tc = load_config(args.config)
    else:
        mc, tc = ModelConfig(), TrainConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "no_flip", False):
        overrides["flip_augment"] = False
    return mc, dataclasses.replace(tc, **overrides)


def _clip_files(directory: str, flag: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ValidationError(f"{flag}: no such directory: {directory}")
    files = sorted(d.glob("*.kasf"))
    if not files:
        raise ValidationError(f"{flag}: no .kasf clip files in {directory}")
    return files


def _load_pairs(directory: str, flag: str) -> list[ClipPair]:
    return [load_clip(p) for p in _clip_files(directory, flag)]


def _require_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{flag}: no such file: {path}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    out = _out_dir(args)
    pairs = make_suite(args.clips, frames=args.frames, seed=args.seed, noise_std=args.noise_std)
    for i, pair in enumerate(pairs):
        save_clip(out / f"{i:04d}_{pair.action}.kasf", pair.pose2d, pair.pose3d, pair.action)
    print(f"wrote {len(pairs)} clips to {out}")
    return 0


def cmd_train(args) -> int:
    mc, tc = _configs(args)
    train = _load_pairs(args.train, "--train")
    evals = _load_pairs(args.eval, "--eval") if args.eval else None
    out = _out_dir(args)
    topo, table = default_tables(mc)
    try:
        best, history = fit(train, evals, mc, tc, topo=topo, table=table)
    except DivergenceError as e:
        raise NumericalFailure(str(e)) from e
    save_checkpoint(best, out / "checkpoint.kasf")
    write_history(out / "history.csv", history)
    (out / "config.txt").write_text(format_config(mc, tc), encoding="utf-8")
    best_eval = min(r.eval_mpjpe for r in history)
    print(f"trained {len(history)} epochs; best eval MPJPE {best_eval:.3f} mm; wrote {out}")
    return 0


def _model_from(args):
    mc, _ = _configs(args)
    params = load_checkpoint(_require_file(args.checkpoint, "--checkpoint"))
    topo, table = default_tables(mc)
    return mc, params, topo, table


def cmd_eval(args) -> int:
    files = _clip_files(args.clips, "--clips")
    gts = [load_clip(p) for p in files]
    if any(g.pose3d is None for g in gts):
        raise ValidationError(f"--clips: every clip in {args.clips} needs a 3D ground truth")
    if args.pred:
        preds = []
        for f in files:
            pf = Path(args.pred) / f.name
            if not pf.is_file():
                raise ValidationError(f"--pred: missing prediction file {pf}")
            p = load_clip(pf).pose3d
            if p is None:
                raise ValidationError(f"--pred: {pf} holds no 3D pose")
            preds.append(p)
        topo, _ = default_tables(ModelConfig(joints=gts[0].pose3d.joints))
        preds = [center_on_root(p, topo).data for p in preds]
        gt = [center_on_root(g.pose3d, topo).data for g in gts]
    else:
        if args.checkpoint is None:
            raise ValidationError("eval needs --checkpoint or --pred")
        mc, params, topo, table = _model_from(args)
        if any(g.pose2d is None for g in gts):
            raise ValidationError(f"--clips: every clip in {args.clips} needs a 2D input")
        x, y = stack_pairs(gts, topo)
        preds = list(predict(x, params, mc, topo, table))
        gt = list(y)
    per_clip = []
    for p, g in zip(preds, gt):
        if np.asarray(p).shape != np.asarray(g).shape:
            raise ValidationError(f"prediction shape {np.shape(p)} does not match ground truth {np.shape(g)}")
        try:
            pm = p_mpjpe(p, g, scale=not args.no_scale_align)
        except UnalignableFrameError:
            pm = float("nan")
        per_clip.append(ClipMetrics(mpjpe(p, g), pm))
    rep = report(per_clip, [g.action for g in gts])
    print(rep.to_text(), end="")
    if args.out:
        out = _out_dir(args)
        (out / "report.txt").write_text(rep.to_text(), encoding="utf-8")
        (out / "report.csv").write_text(rep.to_csv(), encoding="utf-8")
    return 0


def cmd_infer(args) -> int:
    mc, params, topo, table = _model_from(args)
    pair = load_clip(_require_file(args.input, "--input"))
    if pair.pose2d is None:
        raise ValidationError(f"--input: {args.input} holds no 2D pose")
    pred = center_on_root(model_forward(pair.pose2d, params, mc, topo, table), topo)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_clip(out, None, pred, pair.action)
    print(f"wrote {out}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    ops = op_suite(seed)
    groups = grouped(model_check(seed))
    failed = False
    print(f"{'group':<32} {'max rel err':>12}  status")
    for title, errs, tol in (("op", ops, OP_TOL), ("model", groups, MODEL_TOL)):
        for name, err in errs.items():
            ok = err < tol
            failed |= not ok
            print(f"{title + ':' + name:<32} {err:12.3e}  {'ok' if ok else 'FAIL'}")
    print("gradcheck", "FAILED" if failed else "passed")
    if failed:
        raise NumericalFailure("gradient check exceeded tolerance")
    return 0


def cmd_selftest(args) -> int:
    from . import selftest
    results = selftest.run_all(0 if args.seed is None else args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        raise NumericalFailure("selftest failed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kaslift", description="2D-to-3D pose lifting on synthetic motion.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        p.add_argument("--seed", type=int, default=None, help="random seed (unsigned)")
        if config:
            p.add_argument("--config", help="key = value config file")

    p = subs.add_parser("synth", help="write synthetic clip files")
    common(p, config=False)
    p.add_argument("--out", required=True)
    p.add_argument("--clips", type=int, default=20, help="clips per motion template")
    p.add_argument("--frames", type=int, default=27)
    p.add_argument("--noise-std", type=float, default=2.0, help="2D noise in pixels")
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("train", help="train a model on clip files")
    common(p)
    p.add_argument("--train", required=True, help="directory of training clips")
    p.add_argument("--eval", help="directory of evaluation clips (default: the training clips)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-flip", action="store_true", help="disable flip augmentation")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="MPJPE / P-MPJPE report")
    common(p)
    p.add_argument("--clips", required=True, help="directory of ground-truth clips")
    p.add_argument("--checkpoint")
    p.add_argument("--pred", help="directory of predicted clips, matched by file name")
    p.add_argument("--out")
    p.add_argument("--no-scale-align", action="store_true", help="rigid instead of similarity alignment")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("infer", help="lift one 2D clip")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output clip file")
    p.set_defaults(func=cmd_infer)

    p = subs.add_parser("gradcheck", help="finite-difference gradient suite")
    common(p, config=False)
    p.set_defaults(func=cmd_gradcheck)

    p = subs.add_parser("selftest", help="run the built-in oracle checks")
    common(p, config=False)
    p.set_defaults(func=cmd_selftest)
    return parser


def _dispatch(args) -> int:
    try:
        return args.func(args)
    except NumericalFailure as e:
        print(f"kaslift: numerical failure: {e}", file=sys.stderr)
        return 2
    except FloatingPointError as e:
        print(f"kaslift: numerical failure: {e}", file=sys.stderr)
        return 2
    except (ValidationError, ContainerError, ag.ShapeError, ValueError, KeyError, OSError) as e:
        print(f"kaslift: error: {e}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("kaslift: error: --seed must be unsigned", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("KASLIFT_THREADS")
    if threads:
        try:
            n = int(threads)
            if n < 1:
                raise ValueError
        except ValueError:
            print(f"kaslift: error: KASLIFT_THREADS must be a positive integer, got {threads!r}",
                  file=sys.stderr)
            return 1
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=n):
            return _dispatch(args)
    return _dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
