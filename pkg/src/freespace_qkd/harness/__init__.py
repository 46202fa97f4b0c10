"""Experiment runner, classical channel, reports and the command line."""
