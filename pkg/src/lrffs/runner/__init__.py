"""Experiment orchestration, wire format, transports and the CLI."""
