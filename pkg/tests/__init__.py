"""Tests for the conformal OOD detector."""
