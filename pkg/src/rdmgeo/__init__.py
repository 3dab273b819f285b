"""Exact and variational two-electron reduced density matrices with
geometric N-representability audits."""

__version__ = "0.1.0"
