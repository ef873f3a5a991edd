"""Tests for polyattn."""
