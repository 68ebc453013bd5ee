"""Adaptive touch-based continuous authentication."""
