import json

from argparse import ArgumentParser
from dataclasses import replace

from nowcast.config import RunConfig
from nowcast.sim.dataset import generate_dataset, validate_dataset

from nwc.commands.base import NWCCommand, positive_int, require_option
from nwc.config import NWCConfig


class GenerateCommand(NWCCommand):
    """
    Generate a simulated depth dataset
    """
    name = "generate"
    alias = "gen"
    description = "Render a seeded synthetic arm dataset to disk"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        parser.add_argument("--out", help="Destination directory of the dataset", required=True)

        parser.add_argument("--seed", help="Generation seed (default: config seed)", type=int)

        parser.add_argument("--sequences", help="Number of sequences", type=positive_int)

        parser.add_argument("--duration", help="Duration of each sequence in seconds", type=float)

        parser.add_argument("--workers", help="Worker processes, capped by NOWCAST_THREADS", type=positive_int)

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        changes = {}

        if args.sequences is not None:
            changes["n_sequences"] = args.sequences

        if args.duration is not None:
            changes["duration"] = args.duration

        if args.workers is not None:
            changes["workers"] = args.workers

        dataset_config = replace(run_config.dataset, **changes)

        manifest = generate_dataset(dataset_config, seed=run_config.seed, out_dir=args.out)

        n_frames = sum(sequence["n_frames"] for sequence in manifest["sequences"])

        print(f"Generated {len(manifest['sequences'])} sequences, {n_frames} frames in {args.out}")


class ValidateDatasetCommand(NWCCommand):
    """
    Check a dataset for parse errors and joint coverage
    """
    name = "validate"
    description = "Parse every file of a dataset and report joint coverage"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        parser.add_argument("--data", help="Dataset directory (default: config data_dir)")

        parser.add_argument("--json", help="Output as JSON", action="store_true", default=False)

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        data_dir = require_option(args.data or run_config.data_dir, "--data", "data_dir")

        report = validate_dataset(data_dir)

        if args.json:
            print(json.dumps(report.to_dict(), indent=2))

            return

        print(f"Sequences: {report.n_sequences}")

        print(f"Frames: {report.n_frames}")

        print(f"Joints in frame: {100 * report.in_frame_fraction:.2f}%")

        print(f"Joints valid: {100 * report.valid_fraction:.2f}%")
