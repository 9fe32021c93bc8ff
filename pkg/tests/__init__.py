"""Tests for dynelect."""
