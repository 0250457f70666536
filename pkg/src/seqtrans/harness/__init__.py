"""Desk-scale experiment harness: synthetic data, training, decode grid, CLI."""
