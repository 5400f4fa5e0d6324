"""Weyl composition engine."""
