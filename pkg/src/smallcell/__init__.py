"""Outage, throughput and energy-efficiency analysis of dense multi-antenna small-cell networks."""

__version__ = "0.1.0"
