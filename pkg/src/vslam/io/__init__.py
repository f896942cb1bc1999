"""Map files, configuration, datasets and trajectory files."""

from .config import SCHEMA, Config, ConfigError, config_for_camera, load_config, parse_config
from .dataset import Dataset, DatasetError, load_image, read_dataset, write_feature_file, write_synthetic_dataset
from .mapfile import (
    FORMAT_VERSION,
    MapFormatError,
    MapVersionError,
    decode_map,
    encode_map,
    load_map,
    map_to_document,
    save_map,
)
from .trajectory import TrajectoryFormatError, format_trajectory, parse_trajectory, read_trajectory, write_trajectory

__all__ = [
    "Config",
    "ConfigError",
    "Dataset",
    "DatasetError",
    "FORMAT_VERSION",
    "MapFormatError",
    "MapVersionError",
    "SCHEMA",
    "TrajectoryFormatError",
    "config_for_camera",
    "decode_map",
    "encode_map",
    "format_trajectory",
    "load_config",
    "load_image",
    "load_map",
    "map_to_document",
    "parse_config",
    "parse_trajectory",
    "read_dataset",
    "read_trajectory",
    "save_map",
    "write_feature_file",
    "write_synthetic_dataset",
    "write_trajectory",
]
