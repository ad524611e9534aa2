"""
Run configuration schema

A run configuration is a JSON document with the sections dataset, heatmap, model, train and
augment plus the top-level keys seed, data_dir, out_dir and device. Every section is checked
against its declared attributes before the typed configurations are built, and cross-section
constraints are validated once all sections are known.
"""
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Dict, List, Optional, Type

from nowcast.augment import AugmentParams
from nowcast.exceptions import ConfigError, InvalidArgumentError
from nowcast.model.config import ModelConfig
from nowcast.sim.dataset import DatasetConfig, frames_per_step, offsets_to_frames
from nowcast.training.trainer import TrainConfig


class ConfigAttributeError(ConfigError):
    def __init__(self, attribute_name: str, error: str = "missing required attribute", section: Optional[str] = None):
        """
        Raised when a configuration attribute is missing, unknown or of the wrong type

        Keyword arguments:
        attribute_name -- the offending attribute
        error -- what is wrong with it (default: missing required attribute)
        section -- the section holding the attribute (default: None)
        """
        self.attribute_name = attribute_name

        self.section = section

        qualified = f"{section}.{attribute_name}" if section else attribute_name

        super().__init__(f"{error}: {qualified}")


class ConfigAttributeType(StrEnum):
    ANY = "ANY"
    BOOLEAN = "BOOLEAN"
    FLOAT = "FLOAT"
    INTEGER = "INTEGER"
    LIST = "LIST"
    OBJECT = "OBJECT"
    STRING = "STRING"


class ConfigAttribute:
    def __init__(self, name: str, attribute_type: ConfigAttributeType = ConfigAttributeType.FLOAT,
                 attribute_subtype: Optional[ConfigAttributeType] = None, optional: bool = True,
                 nullable: bool = False):
        """
        Declare a configuration attribute

        Keyword arguments:
        name -- the attribute name
        attribute_type -- the expected JSON type (default: FLOAT)
        attribute_subtype -- element type of LIST attributes (default: None)
        optional -- whether the attribute may be left out, the built-in default applies then (default: True)
        nullable -- whether null is an accepted value (default: False)
        """
        self.name = name

        self.attribute_type = attribute_type

        self.attribute_subtype = attribute_subtype

        self.optional = optional

        self.nullable = nullable

    @staticmethod
    def _matches(value: Any, attribute_type: ConfigAttributeType) -> bool:
        if attribute_type == ConfigAttributeType.ANY:
            return True

        if attribute_type == ConfigAttributeType.BOOLEAN:
            return isinstance(value, bool)

        # ints are accepted wherever a float is expected, JSON does not tell 4 from 4.0
        if attribute_type == ConfigAttributeType.FLOAT:
            return isinstance(value, (int, float)) and not isinstance(value, bool)

        if attribute_type == ConfigAttributeType.INTEGER:
            return isinstance(value, int) and not isinstance(value, bool)

        if attribute_type == ConfigAttributeType.LIST:
            return isinstance(value, (list, tuple))

        if attribute_type == ConfigAttributeType.OBJECT:
            return isinstance(value, dict)

        if attribute_type == ConfigAttributeType.STRING:
            return isinstance(value, str)

        return False

    def validate_type(self, value: Any) -> bool:
        """
        Check a value against the declared type

        Keyword arguments:
        value -- the value to check
        """
        if value is None:
            return self.nullable

        if not self._matches(value, self.attribute_type):
            return False

        if self.attribute_type == ConfigAttributeType.LIST and self.attribute_subtype:
            return all(self._matches(item, self.attribute_subtype) for item in value)

        return True


class ConfigSection:
    """
    A validated group of configuration values. Only the values actually given are kept, the
    typed configuration supplies the defaults of everything else.
    """
    name: str
    attribute_definitions: List[ConfigAttribute]

    def __init__(self, **kwargs):
        known = {attr.name for attr in self.attribute_definitions}

        for key in kwargs:
            if key not in known:
                raise ConfigAttributeError(attribute_name=key, error="unknown attribute", section=self.name)

        self.attributes = {}

        for attr in self.attribute_definitions:
            if attr.name not in kwargs:
                if not attr.optional:
                    raise ConfigAttributeError(attribute_name=attr.name, section=self.name)

                continue

            value = kwargs[attr.name]

            if not attr.validate_type(value):
                raise ConfigAttributeError(attribute_name=attr.name, error="invalid type for attribute", section=self.name)

            self.attributes[attr.name] = value

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.attributes)


class DatasetSection(ConfigSection):
    name = "dataset"

    attribute_definitions = [
        ConfigAttribute("n_sequences", ConfigAttributeType.INTEGER),
        ConfigAttribute("duration"),
        ConfigAttribute("fps"),
        ConfigAttribute("intrinsics", ConfigAttributeType.OBJECT),
        ConfigAttribute("intrinsics_jitter"),
        ConfigAttribute("base_translation", ConfigAttributeType.LIST, ConfigAttributeType.FLOAT),
        ConfigAttribute("base_jitter", ConfigAttributeType.LIST, ConfigAttributeType.FLOAT),
        ConfigAttribute("base_yaw_range"),
        ConfigAttribute("trajectory", ConfigAttributeType.OBJECT),
        ConfigAttribute("ground_plane", ConfigAttributeType.BOOLEAN),
        ConfigAttribute("back_plane_depth", nullable=True),
        ConfigAttribute("max_range"),
        ConfigAttribute("xy_half_extent"),
        ConfigAttribute("joint_groups", ConfigAttributeType.OBJECT),
        ConfigAttribute("placement_attempts", ConfigAttributeType.INTEGER),
        ConfigAttribute("min_in_frame"),
        ConfigAttribute("workers", ConfigAttributeType.INTEGER, nullable=True),
    ]


class HeatmapSection(ConfigSection):
    name = "heatmap"

    attribute_definitions = [
        ConfigAttribute("sigma_uv"),
        ConfigAttribute("sigma_uz"),
        ConfigAttribute("z_min"),
        ConfigAttribute("z_max"),
        ConfigAttribute("peak_threshold"),
    ]


class ModelSection(ConfigSection):
    name = "model"

    attribute_definitions = [
        ConfigAttribute("input_height", ConfigAttributeType.INTEGER),
        ConfigAttribute("input_width", ConfigAttributeType.INTEGER),
        ConfigAttribute("backbone", ConfigAttributeType.STRING),
        ConfigAttribute("backbone_channels", ConfigAttributeType.INTEGER),
        ConfigAttribute("motion_embed_dim", ConfigAttributeType.INTEGER),
        ConfigAttribute("recurrent_hidden", ConfigAttributeType.INTEGER),
        ConfigAttribute("motion_channels", ConfigAttributeType.INTEGER),
        ConfigAttribute("motion_out_channels", ConfigAttributeType.INTEGER),
        ConfigAttribute("head_channels", ConfigAttributeType.LIST, ConfigAttributeType.INTEGER),
        ConfigAttribute("forecast_channels", ConfigAttributeType.INTEGER),
        ConfigAttribute("past_count", ConfigAttributeType.INTEGER),
        ConfigAttribute("future_count", ConfigAttributeType.INTEGER),
        ConfigAttribute("num_joints", ConfigAttributeType.INTEGER),
        ConfigAttribute("use_visual", ConfigAttributeType.BOOLEAN),
        ConfigAttribute("use_motion", ConfigAttributeType.BOOLEAN),
    ]


class TrainSection(ConfigSection):
    name = "train"

    attribute_definitions = [
        ConfigAttribute("epochs", ConfigAttributeType.INTEGER),
        ConfigAttribute("learning_rate"),
        ConfigAttribute("lr_decay_factor"),
        ConfigAttribute("lr_milestones", ConfigAttributeType.LIST, ConfigAttributeType.FLOAT),
        ConfigAttribute("batch_size", ConfigAttributeType.INTEGER),
        ConfigAttribute("teacher_forcing_jitter_cm"),
        ConfigAttribute("loss_weights", ConfigAttributeType.LIST, ConfigAttributeType.FLOAT),
        ConfigAttribute("max_steps", ConfigAttributeType.INTEGER, nullable=True),
        ConfigAttribute("max_samples", ConfigAttributeType.INTEGER, nullable=True),
        ConfigAttribute("augment", ConfigAttributeType.BOOLEAN),
        ConfigAttribute("past_rate"),
        ConfigAttribute("future_offsets", ConfigAttributeType.LIST, ConfigAttributeType.FLOAT),
        ConfigAttribute("deterministic", ConfigAttributeType.BOOLEAN),
        ConfigAttribute("validate", ConfigAttributeType.BOOLEAN),
    ]


class AugmentSection(ConfigSection):
    name = "augment"

    attribute_definitions = [
        ConfigAttribute("xy_translation_range"),
        ConfigAttribute("z_translation_range"),
        ConfigAttribute("rotation_range"),
        ConfigAttribute("rotation_axes", ConfigAttributeType.STRING),
        ConfigAttribute("pepper_fraction"),
        ConfigAttribute("dropout_region_count", ConfigAttributeType.LIST, ConfigAttributeType.INTEGER),
        ConfigAttribute("dropout_region_size", ConfigAttributeType.LIST, ConfigAttributeType.INTEGER),
        ConfigAttribute("max_outside_fraction"),
    ]


SECTIONS: Dict[str, Type[ConfigSection]] = {
    section.name: section for section in (DatasetSection, HeatmapSection, ModelSection, TrainSection, AugmentSection)
}

TOP_LEVEL_ATTRIBUTES = [
    ConfigAttribute("seed", ConfigAttributeType.INTEGER),
    ConfigAttribute("data_dir", ConfigAttributeType.STRING, nullable=True),
    ConfigAttribute("out_dir", ConfigAttributeType.STRING, nullable=True),
    ConfigAttribute("device", ConfigAttributeType.STRING),
]


def _section_names(section: Type[ConfigSection]) -> List[str]:
    return [attr.name for attr in section.attribute_definitions]


def _build(section: str, factory, values: Dict):
    try:
        return factory(values)

    except (InvalidArgumentError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid {section} settings: {err}") from err


def merge_values(base: Dict, overrides: Dict) -> Dict:
    """
    Recursive merge of two configuration documents, values of overrides win

    Keyword arguments:
    base -- the lower-precedence document
    overrides -- the higher-precedence document
    """
    merged = dict(base)

    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key in SECTIONS:
            merged[key] = merge_values(merged[key], value)

        else:
            merged[key] = value

    return merged


@dataclass
class RunConfig:
    """
    Every setting of a run. z_min and z_max of the heatmap section bound both the simulated
    workspace and the depth codec, xy_half_extent of the dataset section feeds the network
    normalization.
    """
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentParams = field(default_factory=AugmentParams)
    seed: int = 0
    data_dir: Optional[str] = None
    out_dir: Optional[str] = None
    device: str = "cpu"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Cross-section checks"""
        if self.model.future_count != len(self.train.future_offsets):
            raise ConfigError(
                f"model.future_count is {self.model.future_count} but train.future_offsets has "
                f"{len(self.train.future_offsets)} entries"
            )

        shape = (self.dataset.intrinsics.height, self.dataset.intrinsics.width)

        if shape != (self.model.input_height, self.model.input_width):
            raise ConfigError(
                f"dataset frames are {shape[0]}x{shape[1]}, model input is {self.model.input_height}x{self.model.input_width}"
            )

        if (self.dataset.z_min, self.dataset.z_max) != (self.model.z_min, self.model.z_max):
            raise ConfigError("dataset and model depth ranges differ")

        try:
            frames_per_step(self.dataset.fps, self.train.past_rate)

            offsets_to_frames(self.train.future_offsets, self.dataset.fps)

        except InvalidArgumentError as err:
            raise ConfigError(f"train timing does not fit the dataset frame rate: {err}") from err

    @classmethod
    def from_dict(cls, values: Dict) -> "RunConfig":
        """
        Validate and build a run configuration from its JSON form

        Keyword arguments:
        values -- the configuration document
        """
        top_level = {attr.name: attr for attr in TOP_LEVEL_ATTRIBUTES}

        for key, value in values.items():
            if key in SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigAttributeError(attribute_name=key, error="section must be an object")

                continue

            if key not in top_level:
                raise ConfigAttributeError(attribute_name=key, error="unknown attribute")

            if not top_level[key].validate_type(value):
                raise ConfigAttributeError(attribute_name=key, error="invalid type for attribute")

        sections = {name: section(**values.get(name, {})).to_dict() for name, section in SECTIONS.items()}

        heatmap = sections["heatmap"]

        dataset_values = dict(sections["dataset"])

        for key in ("z_min", "z_max"):
            if key in heatmap:
                dataset_values[key] = heatmap[key]

        dataset = _build("dataset", DatasetConfig.from_dict, dataset_values)

        model = _build("model", ModelConfig.from_dict, dict(
            sections["model"],
            **heatmap,
            xy_half_extent=dataset.xy_half_extent,
        ))

        seed = values.get("seed", 0)

        device = values.get("device", "cpu")

        train = _build("train", TrainConfig.from_dict, dict(sections["train"], seed=seed, device=device))

        augment = _build("augment", lambda given: AugmentParams(**{
            key: tuple(value) if isinstance(value, list) else value for key, value in given.items()
        }), sections["augment"])

        return cls(
            dataset=dataset,
            model=model,
            train=train,
            augment=augment,
            seed=seed,
            data_dir=values.get("data_dir"),
            out_dir=values.get("out_dir"),
            device=device,
        )

    def to_dict(self) -> Dict:
        """The JSON form, every attribute spelled out"""
        dataset = self.dataset.to_dict()

        dataset["workers"] = self.dataset.workers

        model = self.model.to_dict()

        train = self.train.to_dict()

        return {
            "seed": self.seed,
            "data_dir": self.data_dir,
            "out_dir": self.out_dir,
            "device": self.device,
            "dataset": {key: dataset[key] for key in _section_names(DatasetSection)},
            "heatmap": {key: model[key] for key in _section_names(HeatmapSection)},
            "model": {key: model[key] for key in _section_names(ModelSection)},
            "train": {key: train[key] for key in _section_names(TrainSection)},
            "augment": self.augment.to_dict(),
        }
