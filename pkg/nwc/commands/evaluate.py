import json
import os
import sys
import time

from argparse import ArgumentParser
from typing import Dict

import numpy as np

from nowcast.config import RunConfig
from nowcast.metrics.plots import write_horizon_chart
from nowcast.metrics.report import MetricsReport, mode_gap, write_report_files
from nowcast.model.checkpoint import load_checkpoint
from nowcast.model.nowcaster import Nowcaster
from nowcast.sim.dataset import DEFAULT_PAST_RATE, SimDataset, load_samples
from nowcast.training.baseline import BaselinePredictor, LinearForecaster
from nowcast.training.evaluation import (
    EVALUATION_MODES,
    NetworkPredictor,
    check_compatibility,
    evaluate,
    evaluate_predictor,
    resolve_offsets,
)
from nowcast.training.rollout import new_state, rollout

from nwc.commands.base import NWCCommand, NWCErrorMessage, positive_int, require_option
from nwc.config import NWCConfig


CHART_FILE = "horizon_map.svg"


def _modes(mode: str):
    return EVALUATION_MODES if mode == "both" else (mode,)


def _print_report(report: MetricsReport):
    print(f"[{report.mode}] ADD {report.add_mean:.2f} +/- {report.add_std:.2f} cm over {report.n_frames} frames")

    print("  mAP: " + "  ".join(f"@{threshold:g}cm {100 * value:.1f}%" for threshold, value in report.map_at.items()))

    for offset, stats in sorted(report.per_horizon.items()):
        label = f"t+{offset:g}s" if offset else "t"

        print(f"  {label:>8}  ADD {stats.add_mean:.2f} cm  mAP@10cm {100 * stats.map_at.get(10.0, float('nan')):.1f}%")


def _emit_reports(reports: Dict[str, MetricsReport], report_dir: str):
    for report in reports.values():
        _print_report(report)

    if "gt_past" in reports and "autoregressive" in reports:
        gap = mode_gap(reports["gt_past"], reports["autoregressive"])

        print("Autoregressive minus ground-truth past, ADD (cm): "
              + "  ".join(f"{offset}s {values['add_mean']:+.2f}" for offset, values in gap.items()))

    if report_dir:
        written = write_report_files(reports, report_dir)

        written.append(write_horizon_chart(reports, os.path.join(report_dir, CHART_FILE)))

        print(f"Wrote {len(written)} report files to {report_dir}")


def _sequence(dataset: SimDataset, requested: str) -> str:
    if requested is None:
        candidates = dataset.sequence_names("test") or dataset.sequence_names("all")

        return candidates[0]

    if requested not in dataset.sequence_names("all"):
        raise NWCErrorMessage(f"sequence {requested} is not part of {dataset.dataset_dir}", exit_code=2)

    return requested


class EvaluateCommand(NWCCommand):
    """
    Evaluate a checkpoint
    """
    name = "eval"
    alias = "evaluate"
    description = "Evaluate a checkpoint with ground-truth past poses, autoregressively or both"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        parser.add_argument("checkpoint", help="Checkpoint file")

        parser.add_argument("--data", help="Dataset directory (default: config data_dir)")

        parser.add_argument("--mode", help="Evaluation protocol (default: both)",
                            choices=EVALUATION_MODES + ("both",), default="both")

        parser.add_argument("--split", help="Dataset split (default: test)", choices=("train", "val", "test", "all"),
                            default="test")

        parser.add_argument("--report", help="Directory receiving JSON, CSV and SVG reports")

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        data_dir = require_option(args.data or run_config.data_dir, "--data", "data_dir")

        checkpoint = load_checkpoint(args.checkpoint)

        reports = {
            mode: evaluate(checkpoint, data_dir, mode, split=args.split, device=run_config.device)
            for mode in _modes(args.mode)
        }

        _emit_reports(reports, args.report)


class BaselineCommand(NWCCommand):
    """
    Fit and evaluate the linear forecasting baseline
    """
    name = "baseline"
    description = "Fit a least-squares forecaster on the train split and evaluate it"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        parser.add_argument("--data", help="Dataset directory (default: config data_dir)")

        parser.add_argument("--mode", help="Evaluation protocol (default: gt_past)",
                            choices=EVALUATION_MODES + ("both",), default="gt_past")

        parser.add_argument("--split", help="Dataset split (default: test)", choices=("train", "val", "test", "all"),
                            default="test")

        parser.add_argument("--ridge", help="Regularization strength (default: 1e-6)", type=float, default=1e-6)

        parser.add_argument("--report", help="Directory receiving JSON, CSV and SVG reports")

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        data_dir = require_option(args.data or run_config.data_dir, "--data", "data_dir")

        dataset = SimDataset(data_dir)

        past_count = run_config.model.past_count

        past_rate = run_config.train.past_rate

        offsets = run_config.train.future_offsets

        forecaster = LinearForecaster(past_count, len(offsets), dataset.num_joints, ridge=args.ridge)

        forecaster.fit(load_samples(data_dir, "train", past_count, past_rate, offsets))

        predictor = BaselinePredictor(forecaster)

        reports = {
            mode: evaluate_predictor(predictor, data_dir, mode, split=args.split, past_count=past_count,
                                     past_rate=past_rate, future_offsets=offsets)
            for mode in _modes(args.mode)
        }

        _emit_reports(reports, args.report)


class _CheckpointCommand(NWCCommand):
    """Shared setup of commands streaming one sequence through a checkpoint"""

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        parser.add_argument("checkpoint", help="Checkpoint file")

        parser.add_argument("--data", help="Dataset directory (default: config data_dir)")

        parser.add_argument("--sequence", help="Sequence name (default: the first test sequence)")

    def _load(self, run_config: RunConfig, args):
        data_dir = require_option(args.data or run_config.data_dir, "--data", "data_dir")

        checkpoint = load_checkpoint(args.checkpoint)

        dataset = SimDataset(data_dir)

        check_compatibility(checkpoint, dataset)

        sequence = _sequence(dataset, args.sequence)

        nowcaster = Nowcaster(checkpoint.build_network(), device=run_config.device)

        predictor = NetworkPredictor(nowcaster, resolve_offsets(checkpoint))

        past_rate = checkpoint.metadata.get("past_rate", DEFAULT_PAST_RATE)

        return dataset, sequence, nowcaster, predictor, past_rate


class PredictCommand(_CheckpointCommand):
    """
    Stream a sequence through the autoregressive rollout
    """
    name = "predict"
    description = "Write per-frame present and forecast poses of a sequence as JSON lines"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        super().configure_parser(parser)

        parser.add_argument("--out", help="Destination file (default: standard output)")

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        dataset, sequence, nowcaster, predictor, past_rate = self._load(run_config, args)

        state = new_state(nowcaster.config.past_count, dataset.fps, past_rate)

        frames = (dataset.depth(sequence, frame) for frame in range(dataset.num_frames(sequence)))

        out = open(args.out, "w") if args.out else sys.stdout

        try:
            for step in rollout(predictor, frames, dataset.intrinsics(sequence), state, dataset.num_joints):
                out.write(json.dumps({
                    "frame": step.frame,
                    "current": step.current.joints.tolist(),
                    "forecasts": [forecast.joints.tolist() for forecast in step.forecasts],
                }) + "\n")

        finally:
            if args.out:
                out.close()


class BenchCommand(_CheckpointCommand):
    """
    Time per-frame inference
    """
    name = "bench"
    description = "Measure per-frame latency of estimation alone and of the full nowcasting pipeline"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        super().configure_parser(parser)

        parser.add_argument("--frames", help="Number of timed frames (default: 100)", type=positive_int, default=100)

        parser.add_argument("--warmup", help="Untimed frames run first (default: 5)", type=int, default=5)

    @staticmethod
    def _summary(label: str, seconds: np.ndarray):
        mean_ms = 1000 * float(np.mean(seconds))

        p95_ms = 1000 * float(np.percentile(seconds, 95))

        # a coarse clock can time every frame at 0
        rate = f"{1000 / mean_ms:7.1f} FPS" if mean_ms > 0 else "    n/a FPS"

        print(f"{label:<16} mean {mean_ms:8.2f} ms  p95 {p95_ms:8.2f} ms  {rate}")

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        dataset, sequence, nowcaster, predictor, past_rate = self._load(run_config, args)

        intrinsics = dataset.intrinsics(sequence)

        n_frames = dataset.num_frames(sequence)

        total = max(args.warmup, 0) + args.frames

        frames = [dataset.depth(sequence, index % n_frames) for index in range(total)]

        timings = np.zeros(total)

        for index, depth in enumerate(frames):
            started = time.perf_counter()

            nowcaster.estimate_only(depth, intrinsics)

            timings[index] = time.perf_counter() - started

        self._summary("estimation only", timings[-args.frames:])

        state = new_state(nowcaster.config.past_count, dataset.fps, past_rate)

        steps = rollout(predictor, iter(frames), intrinsics, state, dataset.num_joints)

        for index in range(total):
            started = time.perf_counter()

            next(steps)

            timings[index] = time.perf_counter() - started

        self._summary("full pipeline", timings[-args.frames:])
