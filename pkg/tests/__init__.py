"""Tests for irfield."""
