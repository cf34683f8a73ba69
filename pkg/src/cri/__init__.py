"""Cyber Resilience Index engine.

Quantifies how well a modelled network withstands attack campaigns by
emulating attacker decision-making as a partially observable decision
process and aggregating per-technique compromise probabilities into a
single published index.
"""

__version__ = "0.1.0"
