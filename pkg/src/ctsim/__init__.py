"""Deterministic simulator for a blockchain-backed cloud identity federation.

Providers register on a shared ledger, issue access tokens for each other's
users as signed transactions, and maintain pairwise trust from on-chain
feedback. Block production is a trust- and stake-weighted eligibility
lottery. Given the same scenario config, every run reproduces the same
ledger bytes and event log.
"""

from ._ecbackend import BACKEND as curve_backend

__version__ = "0.1.0"

__all__ = ["curve_backend", "__version__"]
