"""Desk-scale simulator of a quantum consensus mechanism for consortium
blockchains: self-tallying entangled-state voting, QRNG-driven bookkeeper
rotation, and an entanglement-chained block ledger, all deterministic and
replayable from a single seed."""

__version__ = "0.1.0"
