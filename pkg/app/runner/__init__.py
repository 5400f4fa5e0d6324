"""Experiment runner: argument parsing, pipeline and exporters."""
