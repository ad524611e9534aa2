import json

from argparse import ArgumentParser
from dataclasses import replace

from nowcast.config import RunConfig
from nowcast.training.ablation import run_ablation
from nowcast.training.trainer import train

from nwc.commands.base import NWCCommand, positive_int, require_option
from nwc.config import NWCConfig


def _training_settings(run_config: RunConfig, args):
    """Model and train configurations with the shared training flags applied"""
    model_config = run_config.model

    train_changes = {}

    if args.epochs is not None:
        train_changes["epochs"] = args.epochs

    if args.max_steps is not None:
        train_changes["max_steps"] = args.max_steps

    if args.no_augment:
        train_changes["augment"] = False

    return model_config, replace(run_config.train, **train_changes)


def _add_training_flags(parser: ArgumentParser):
    parser.add_argument("--data", help="Dataset directory (default: config data_dir)")

    parser.add_argument("--out", help="Output directory (default: config out_dir)")

    parser.add_argument("--seed", help="Training seed (default: config seed)", type=int)

    parser.add_argument("--epochs", help="Number of epochs", type=positive_int)

    parser.add_argument("--max-steps", help="Stop after this many optimizer steps", type=positive_int, dest="max_steps")

    parser.add_argument("--no-augment", help="Disable data augmentation", action="store_true", default=False, dest="no_augment")


class TrainCommand(NWCCommand):
    """
    Train a nowcasting network
    """
    name = "train"
    description = "Train a network on a dataset, writing checkpoints and a metrics log"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        _add_training_flags(parser)

        parser.add_argument("--no-forecasting", help="Train estimation alone, loss weights (1, 0)",
                            action="store_true", default=False, dest="no_forecasting")

        parser.add_argument("--depth-only", help="Drop the motion branch and train estimation alone",
                            action="store_true", default=False, dest="depth_only")

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        data_dir = require_option(args.data or run_config.data_dir, "--data", "data_dir")

        out_dir = require_option(args.out or run_config.out_dir, "--out", "out_dir")

        model_config, train_config = _training_settings(run_config, args)

        if args.no_forecasting or args.depth_only:
            train_config = replace(train_config, loss_weights=(1.0, 0.0))

        if args.depth_only:
            model_config = replace(model_config, use_motion=False)

        result = train(model_config, train_config, data_dir, out_dir, augment_params=run_config.augment)

        print(f"Final checkpoint: {result.final_path}")

        print(f"Best checkpoint: {result.best_path} (epoch {result.best_epoch + 1})")


class AblateCommand(NWCCommand):
    """
    Paired trainings with and without the forecasting loss
    """
    name = "ablate"
    description = "Train with loss weights (1, 1) and (1, 0) over several seeds and compare test ADD"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        _add_training_flags(parser)

        parser.add_argument("--seeds", help="Training seeds (default: 0 1 2)", type=int, nargs="+", default=[0, 1, 2])

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        data_dir = require_option(args.data or run_config.data_dir, "--data", "data_dir")

        out_dir = require_option(args.out or run_config.out_dir, "--out", "out_dir")

        model_config, train_config = _training_settings(run_config, args)

        summary = run_ablation(model_config, train_config, data_dir, out_dir, seeds=args.seeds,
                               augment_params=run_config.augment)

        print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
