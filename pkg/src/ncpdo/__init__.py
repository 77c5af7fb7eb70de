"""Desk-scale numerics for operator-valued pseudo-differential calculus."""

__version__ = "0.1.0"
