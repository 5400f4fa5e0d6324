"""Corpus storage."""
