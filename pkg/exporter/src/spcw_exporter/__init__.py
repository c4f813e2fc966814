"""Checkpoint-to-weight-store exporter for the spcw codec."""

from .export import export_checkpoint
from .rules import ExportError, ExportRule, PRESETS

__version__ = "0.1.0"
