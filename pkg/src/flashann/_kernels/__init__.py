"""Compiled extension package; see flashann.core for the selection logic."""
