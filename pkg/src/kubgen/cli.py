"""Command line front end: `generate` builds datasets, `eval` scores records.

Exit codes: 0 all owned scenes succeeded, 2 some scene failed (the manifest
is still written), 1 the invocation itself was bad.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .errors import KubgenError
from .records import read_scene_record
from .runtime import JobSpec, run_job


class CliError(Exception):
    """Bad invocation; reported on stderr, exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def parse_resolution(text):
    parts = text.lower().split("x")
    try:
        w, h = (int(p) for p in parts)
    except ValueError:
        raise CliError(f"resolution must look like 640x480, got {text!r}")
    return (w, h)


def parse_frames(text):
    head, sep, tail = text.partition("..")
    if not sep:
        raise CliError(f"frame range must look like 0..23, got {text!r}")
    try:
        return (int(head), int(tail))
    except ValueError:
        raise CliError(f"frame range must look like 0..23, got {text!r}")


def parse_config_entry(text):
    """key=value with JSON-typed values; unparseable values stay strings."""
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise CliError(f"config entries look like key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _format_config_value(value):
    if isinstance(value, str):
        try:
            json.loads(value)
        except json.JSONDecodeError:
            return value
        # the raw text would reparse as a non-string; quote it
        return json.dumps(value)
    return json.dumps(value)


def build_parser():
    parser = _Parser(prog="kubgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="build a sharded synthetic dataset")
    gen.add_argument("--worker", required=True)
    gen.add_argument("--num-scenes", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--job-id", type=int, default=0)
    gen.add_argument("--num-jobs", type=int, default=1)
    gen.add_argument("--out", default=None,
                     help="output directory (default: $KUBGEN_OUT)")
    gen.add_argument("--resolution", default=None, metavar="WxH")
    gen.add_argument("--frames", default=None, metavar="A..B")
    gen.add_argument("--jobs-parallel", type=int, default=1)
    gen.add_argument("--config", action="append", default=None,
                     metavar="KEY=VALUE")

    ev = sub.add_parser("eval", help="score one scene record against another")
    ev.add_argument("--task", required=True,
                    choices=("flow", "segmentation", "tracks", "psnr"))
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    return parser


def spec_from_args(args):
    out = args.out if args.out is not None else os.environ.get("KUBGEN_OUT")
    if not out:
        raise CliError("--out is required (or set KUBGEN_OUT)")
    config = dict(parse_config_entry(e) for e in (args.config or []))
    return JobSpec(
        worker=args.worker,
        num_scenes=args.num_scenes,
        master_seed=args.seed,
        out_dir=Path(out),
        job_id=args.job_id,
        num_jobs=args.num_jobs,
        resolution=parse_resolution(args.resolution) if args.resolution else None,
        frame_range=parse_frames(args.frames) if args.frames else None,
        jobs_parallel=args.jobs_parallel,
        config=config,
    )


def format_argv(spec):
    """Render a JobSpec back into `kubgen` arguments (inverse of parsing)."""
    argv = [
        "generate",
        "--worker", spec.worker,
        "--num-scenes", str(spec.num_scenes),
        "--seed", str(spec.master_seed),
        "--job-id", str(spec.job_id),
        "--num-jobs", str(spec.num_jobs),
        "--out", str(spec.out_dir),
        "--jobs-parallel", str(spec.jobs_parallel),
    ]
    if spec.resolution is not None:
        argv += ["--resolution", "%dx%d" % tuple(spec.resolution)]
    if spec.frame_range is not None:
        # = form; a negative frame start would otherwise look like a flag
        argv += ["--frames=%d..%d" % tuple(spec.frame_range)]
    for key, value in spec.config.items():
        argv += ["--config", f"{key}={_format_config_value(value)}"]
    return argv


def _jsonable(value):
    """Make a report JSON-safe: infinities become the strings inf/-inf."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def eval_report(task, pred_record, gt_record):
    if gt_record.resolution != pred_record.resolution:
        raise CliError(
            f"resolution mismatch: gt {gt_record.resolution} "
            f"vs pred {pred_record.resolution}"
        )
    if gt_record.n_frames != pred_record.n_frames:
        raise CliError(
            f"frame count mismatch: gt {gt_record.n_frames} "
            f"vs pred {pred_record.n_frames}"
        )
    n = gt_record.n_frames

    if task == "flow":
        report = {"frames": n}
        for name in ("forward_flow", "backward_flow"):
            pred = np.concatenate(
                [pred_record.layer(name, i).reshape(-1, 2) for i in range(n)]
            )
            gt = np.concatenate(
                [gt_record.layer(name, i).reshape(-1, 2) for i in range(n)]
            )
            report[name.split("_")[0]] = {
                "aepe": metrics.aepe(pred, gt),
                "error_rate": metrics.error_rate(pred, gt),
            }
        return report

    if task == "segmentation":
        per_frame = [
            metrics.fg_ari(
                gt_record.layer("segmentation", i)[:, :, 0],
                pred_record.layer("segmentation", i)[:, :, 0],
            )
            for i in range(n)
        ]
        return {
            "fg_ari": float(np.mean(per_frame)),
            "frames": n,
            "per_frame": per_frame,
        }

    if task == "psnr":
        per_frame = [
            metrics.psnr(gt_record.layer("rgba", i), pred_record.layer("rgba", i))
            for i in range(n)
        ]
        return {
            "frames": n,
            "mean_psnr": float(np.mean(per_frame)),
            "per_frame": per_frame,
        }

    if gt_record.tracks is None or pred_record.tracks is None:
        raise CliError("--task tracks needs tracks.json in both records")
    tm = metrics.track_metrics(
        gt_record.tracks,
        pred_record.tracks,
        frame_start=gt_record.metadata["scene"]["frame_start"],
    )
    return {
        "average_jaccard": tm.average_jaccard,
        "jaccard": tm.jaccard,
        "occlusion_accuracy": tm.occlusion_accuracy,
        "position_accuracy": tm.position_accuracy,
        "position_accuracy_avg": tm.position_accuracy_avg,
        "thresholds": tm.thresholds,
    }


def cmd_generate(args):
    spec = spec_from_args(args)
    manifest = run_job(spec)
    n_ok = len(manifest["scenes"])
    n_fail = len(manifest["failures"])
    print(f"wrote {n_ok} scene(s), {n_fail} failure(s) -> {spec.out_dir}")
    for entry in manifest["failures"]:
        print(f"  scene {entry['index']:08d}: {entry['error']}", file=sys.stderr)
    return 2 if n_fail else 0


def cmd_eval(args):
    pred = read_scene_record(args.pred)
    gt = read_scene_record(args.gt)
    report = eval_report(args.task, pred, gt)
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "generate":
            return cmd_generate(args)
        return cmd_eval(args)
    except CliError as exc:
        print(f"kubgen: {exc}", file=sys.stderr)
        return 1
    except KubgenError as exc:
        print(f"kubgen: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
