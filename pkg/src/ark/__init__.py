"""Emulation-based archival toolkit: emblem codec, compressor, and nested VMs."""

__version__ = "0.1.0"
