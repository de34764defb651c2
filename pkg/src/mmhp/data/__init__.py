"""Bundled sample dataset: one pinned-seed simulated run of the two-state
reference model (events, 0.1-width bin counts and the true chain path).
Regenerate with ``scripts/make_sample_data.py``."""

from importlib import resources


def _path(name):
    return resources.files(__package__) / name


def sample_events_path():
    return _path("sample_events.csv")


def sample_counts_path():
    return _path("sample_counts.csv")


def sample_chain_path():
    return _path("sample_chain.csv")
