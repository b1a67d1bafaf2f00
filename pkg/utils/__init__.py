"""
FirmCast - Utilities Module

This module contains utility functions for logging, validation, errors, seeding and artifacts.
"""

from .logger import setup_logger, get_logger, detach_file_handlers
from .validators import (
    ValidationError,
    validate_file_path,
    validate_fraction,
    validate_positive_int,
    validate_ratios,
    validate_config,
)
from .seeding import substream, STREAMS
from .parallel import ordered_map
from .artifacts import sha256_bytes, file_sha256, write_json, read_json, directory_checksums

__all__ = [
    "setup_logger",
    "get_logger",
    "detach_file_handlers",
    "ValidationError",
    "validate_file_path",
    "validate_fraction",
    "validate_positive_int",
    "validate_ratios",
    "validate_config",
    "substream",
    "STREAMS",
    "ordered_map",
    "sha256_bytes",
    "file_sha256",
    "write_json",
    "read_json",
    "directory_checksums",
]
