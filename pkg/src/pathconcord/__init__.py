"""Pathway concordance: inverse shortest-path cost learning, concordance scoring and detour analysis."""

__version__ = "0.1.0"
