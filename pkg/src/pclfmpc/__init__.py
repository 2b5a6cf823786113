"""Polyhedral control Lyapunov functions and PCLF-based MPC for constrained linear systems."""

__version__ = "0.1.0"
