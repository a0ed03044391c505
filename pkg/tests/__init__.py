"""Tests for the dimer-trap self-trapping toolkit."""
