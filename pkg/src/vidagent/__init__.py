"""Agentic video question answering on a synthetic, verifiable environment."""

__version__ = "0.1.0"
