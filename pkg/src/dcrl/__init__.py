"""Discrete causal representation learning."""
