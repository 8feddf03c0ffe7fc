"""Experiment orchestration, reporting and command-line entry point."""
