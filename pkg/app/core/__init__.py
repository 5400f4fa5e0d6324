"""Shared pieces for the calculus and the runner: settings, logging, errors, refinement."""
