import json
import os

from typing import Any, Dict, List, Optional

from nowcast.config import RunConfig, merge_values
from nowcast.exceptions import ConfigError


class NWCConfig:
    """Resolves run configurations from built-in profiles, a config file and flag overrides"""

    PROFILES_DIR = os.path.join(os.path.dirname(__file__), "profiles")
    DEFAULT_PROFILE = "desk"
    PROFILE_KEY = "profile"

    def __init__(self, config_path: Optional[str] = None, profile: Optional[str] = None):
        """
        Initialize the configuration manager

        Keyword arguments:
        config_path -- JSON run configuration file (default: None, built-in values only)
        profile -- profile to start from, overrides the profile named in the file (default: None)
        """
        self.config_path = config_path

        self._file_values = self._load_config()

        self.profile_name = profile or self._file_values.get(self.PROFILE_KEY) or self.DEFAULT_PROFILE

    def _load_config(self) -> Dict[str, Any]:
        """Load the config file, an absent path means no file values"""
        if not self.config_path:
            return {}

        try:
            with open(self.config_path, "r") as config_file:
                values = json.load(config_file)

        except FileNotFoundError:
            raise ConfigError(f"config file {self.config_path} does not exist")

        except json.JSONDecodeError as decode_err:
            raise ConfigError(f"config file {self.config_path} is not valid JSON: {decode_err}")

        if not isinstance(values, dict):
            raise ConfigError(f"config file {self.config_path} must hold a JSON object")

        return values

    def list_profiles(self) -> List[str]:
        """Names of the built-in profiles"""
        return sorted(name[:-len(".json")] for name in os.listdir(self.PROFILES_DIR) if name.endswith(".json"))

    def get_profile(self, profile_name: Optional[str] = None) -> Dict[str, Any]:
        """
        Values of a built-in profile

        Keyword arguments:
        profile_name -- name of the profile (default: the selected profile)
        """
        profile_name = profile_name or self.profile_name

        if profile_name not in self.list_profiles():
            raise ConfigError(f"profile '{profile_name}' does not exist, choose one of {', '.join(self.list_profiles())}")

        with open(os.path.join(self.PROFILES_DIR, f"{profile_name}.json"), "r") as profile_file:
            return json.load(profile_file)

    def values(self, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        Merged configuration document: flag overrides > config file > profile

        Keyword arguments:
        overrides -- values given on the command line (default: None)
        """
        file_values = {key: value for key, value in self._file_values.items() if key != self.PROFILE_KEY}

        return merge_values(merge_values(self.get_profile(), file_values), overrides or {})

    def run_config(self, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Validated run configuration

        Keyword arguments:
        overrides -- values given on the command line (default: None)
        """
        return RunConfig.from_dict(self.values(overrides))

    def save_config(self, path: str, run_config: RunConfig):
        """
        Write a run configuration with every attribute spelled out

        Keyword arguments:
        path -- destination file
        run_config -- the configuration to write
        """
        values = dict(run_config.to_dict(), **{self.PROFILE_KEY: self.profile_name})

        directory = os.path.dirname(path)

        if directory:
            os.makedirs(directory, exist_ok=True)

        with open(path, "w") as config_file:
            json.dump(values, config_file, indent=2, sort_keys=True)
