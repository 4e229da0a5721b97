"""Tests for mpc-pacing."""
