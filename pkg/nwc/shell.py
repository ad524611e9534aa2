import logging
import sys
import traceback

from argparse import ArgumentParser
from typing import List, Optional

from nowcast.exceptions import CheckpointError, ConfigError, DatasetIOError, DatasetParseError, InvalidArgumentError
from nowcast.runtime import default_log_level

from nwc.commands.base import NWCCommand, NWCErrorMessage
from nwc.commands.config import ShowConfigCommand
from nwc.commands.data import GenerateCommand, ValidateDatasetCommand
from nwc.commands.evaluate import BaselineCommand, BenchCommand, EvaluateCommand, PredictCommand
from nwc.commands.train import AblateCommand, TrainCommand
from nwc.config import NWCConfig


EXIT_UNEXPECTED = 1

EXIT_USAGE = 2

EXIT_CONFIG = 3

EXIT_IO = 4

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class NWC:
    def __init__(self, commands: List[NWCCommand]):
        """
        Initialize the NWC class with a list of commands.

        Keyword arguments:
        commands -- a list of NWCCommand classes
        """
        self._loaded_commands = {}

        self._command_aliases = {}

        self._execution_details = {}

        for command in commands:
            if not issubclass(command, NWCCommand):
                raise TypeError(f"Command {command} is not a subclass of NWCCommand")

            if command.name in self._loaded_commands:
                raise ValueError(f"Command with name {command.name} is already loaded")

            self._loaded_commands[command.name] = command

            if command.alias is not None:
                self._command_aliases[command.alias] = command.name

    def _prepare(self, argv: Optional[List[str]] = None):
        """
        Prepare the command line interface

        Keyword arguments:
        argv -- the arguments to parse (default: sys.argv)
        """
        parser = ArgumentParser(prog="nwc", description="NWC the nowcasting toolkit command line interface")

        parser.add_argument(
            "--config",
            help="Path to a JSON run configuration file",
            dest="config_path",
            default=None,
        )

        parser.add_argument(
            "--profile",
            help="Built-in profile to start from (desk, tiny, smoke). Defaults to the file's profile or 'desk'",
            dest="profile",
            default=None,
        )

        parser.add_argument(
            "--log-level",
            help="Log level. Defaults to NOWCAST_LOG_LEVEL or INFO",
            type=str.upper,
            choices=LOG_LEVELS,
            default=default_log_level(),
            dest="log_level",
        )

        parser.add_argument(
            "--device",
            help="Torch device, overrides the config file",
            dest="device",
            default=None,
        )

        subparsers_parser = parser.add_subparsers(title="command", dest="command", help="The command to execute", required=True)

        for _, command_klass in self._loaded_commands.items():
            aliases = [command_klass.alias] if command_klass.alias is not None else []

            subparser = subparsers_parser.add_parser(command_klass.name, aliases=aliases, help=command_klass.description)

            command_klass.configure_parser(subparser)

        return parser.parse_args(argv)

    def _execute_command(self, args):
        """
        Execute the command with the given arguments.

        Keyword arguments:
        args -- the parsed arguments
        """
        if args.command not in self._loaded_commands:
            if args.command in self._command_aliases:
                args.command = self._command_aliases[args.command]

            else:
                raise ValueError(f"command {args.command} not found")

        cmd_klass = self._loaded_commands[args.command]

        overrides = {}

        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed

        if args.device is not None:
            overrides["device"] = args.device

        config = NWCConfig(config_path=args.config_path, profile=args.profile)

        run_config = config.run_config(overrides)

        self._execution_details = {
            "command": args.command,
            "profile": config.profile_name,
            "config_path": args.config_path,
        }

        logging.debug(f"running {args.command} with profile {config.profile_name}")

        cmd = cmd_klass()

        cmd.execute(run_config, config, args)

    def execute(self, argv: Optional[List[str]] = None):
        """
        Execute the NWC command line interface.

        Keyword arguments:
        argv -- the arguments to parse (default: sys.argv)
        """
        args = self._prepare(argv)

        logging.basicConfig(level=args.log_level, format="%(levelname)s %(message)s", stream=sys.stderr, force=True)

        self._execute_command(args)


def main(argv: Optional[List[str]] = None):
    """
    Main entry point for the NWC command line interface.

    Keyword arguments:
    argv -- the arguments to parse (default: sys.argv)
    """
    nwc = NWC(commands=[
        AblateCommand,
        BaselineCommand,
        BenchCommand,
        EvaluateCommand,
        GenerateCommand,
        PredictCommand,
        ShowConfigCommand,
        TrainCommand,
        ValidateDatasetCommand,
    ])

    try:
        nwc.execute(argv)

    except NWCErrorMessage as nwc_err_message:
        sys.stdout.flush()

        print(nwc_err_message, file=sys.stderr)

        sys.exit(nwc_err_message.exit_code)

    except InvalidArgumentError as argument_err:
        print(f"Invalid argument: {argument_err}", file=sys.stderr)

        sys.exit(EXIT_USAGE)

    except (ConfigError, CheckpointError) as config_err:
        print(f"Configuration error: {config_err}", file=sys.stderr)

        sys.exit(EXIT_CONFIG)

    except (DatasetIOError, DatasetParseError) as data_err:
        print(f"Dataset error: {data_err}", file=sys.stderr)

        sys.exit(EXIT_IO)

    except OSError as os_err:
        print(f"I/O error: '{os_err.filename}': {os_err.strerror}", file=sys.stderr)

        sys.exit(EXIT_IO)

    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)

        traceback.print_exc()

        print(f"Execution details: {nwc._execution_details}", file=sys.stderr)

        sys.exit(EXIT_UNEXPECTED)
