from argparse import ArgumentParser, ArgumentTypeError

from nowcast.config import RunConfig

from nwc.config import NWCConfig


class NWCErrorMessage(Exception):
    """
    Error message printed to standard error, the process exits with exit_code
    """
    def __init__(self, message: str, exit_code: int = 1):
        self.exit_code = exit_code

        super().__init__(message)


class NWCCommand:
    name = None
    alias = None
    description = None

    @classmethod
    def configure_parser(cls, parser: ArgumentParser):
        return

    def execute(self, run_config: RunConfig, config: NWCConfig, args):
        raise NotImplementedError


def positive_int(value: str) -> int:
    """argparse type accepting integers >= 1"""
    try:
        number = int(value)

    except ValueError:
        raise ArgumentTypeError(f"expected an integer, got '{value}'")

    if number < 1:
        raise ArgumentTypeError(f"expected an integer >= 1, got {number}")

    return number


def require_option(value, flag: str, config_key: str):
    """
    Return a value resolved from a flag or the config file, raise a usage error when neither is set

    Keyword arguments:
    value -- the resolved value
    flag -- the command line flag
    config_key -- the config file key
    """
    if value is None:
        raise NWCErrorMessage(f"{flag} is required (or set {config_key} in the config file)", exit_code=2)

    return value
