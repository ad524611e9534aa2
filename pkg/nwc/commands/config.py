import json

from argparse import ArgumentParser

from nowcast.config import RunConfig

from nwc.commands.base import NWCCommand
from nwc.config import NWCConfig


class ShowConfigCommand(NWCCommand):
    """
    Show or write the resolved run configuration
    """
    name = "config"
    description = "Print the merged run configuration, optionally writing it to a file"

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        """
        Configure the command line argument parser.

        Keyword arguments:
        parser -- The argument parser to configure
        """
        parser.add_argument("--json", help="Output as JSON", action="store_true", default=False)

        parser.add_argument("--write", help="Write the configuration to this file", dest="write_path")

        parser.add_argument("--list-profiles", help="List the built-in profiles", action="store_true",
                            default=False, dest="list_profiles")

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        """
        Execute the command.

        Keyword arguments:
        run_config -- the resolved run configuration
        config -- the configuration manager
        args -- the parsed arguments
        """
        if args.list_profiles:
            for profile_name in config.list_profiles():
                marker = "*" if profile_name == config.profile_name else " "

                print(f"{marker} {profile_name}")

            return

        if args.write_path:
            config.save_config(args.write_path, run_config)

            print(f"Configuration written to {args.write_path}")

            return

        values = run_config.to_dict()

        if args.json:
            print(json.dumps(dict(values, profile=config.profile_name), indent=2, sort_keys=True))

            return

        print(f"Profile: {config.profile_name}")

        for key, value in values.items():
            if isinstance(value, dict):
                print(f"{key}:")

                for name, item in value.items():
                    print(f"  {name}: {item}")

            else:
                print(f"{key}: {value}")
