"""Offline exporter: raw text through a frozen encoder into LIMD files."""

__version__ = "0.1.0"
