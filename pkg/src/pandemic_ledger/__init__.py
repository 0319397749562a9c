"""Permissioned, tamper-evident health-status ledger.

A single government authority signs hash-linked blocks of typed events;
read replicas pull and verify copies. On top of the chain sit an
event-sourced citizen registry (colour bands, travel history), an airport
exposure rule, and an incentive-token scheme.
"""

__version__ = "0.1.0"
