"""Toolkit for extracting and analyzing cause-and-effect relations in
autonomous-vehicle disengagement reports."""

__version__ = "0.1.0"
