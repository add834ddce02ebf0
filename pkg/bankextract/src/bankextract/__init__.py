"""Pooled backbone activations for labeled image folders, as bank files."""

from .errors import BankFormatError, ConfigurationError
from .extract import ExtractReport, ExtractSpec, extract
from .fbnk import write_fbnk
from .verify import BankReport, parse_bank

__version__ = "0.1.0"

__all__ = [
    "BankFormatError",
    "BankReport",
    "ConfigurationError",
    "ExtractReport",
    "ExtractSpec",
    "extract",
    "parse_bank",
    "write_fbnk",
]
