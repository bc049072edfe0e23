"""Combinatorial hardening of multiple-choice questions with adaptive evaluation."""

__version__ = "0.1.0"
