"""Damped power series of Perron-Frobenius operators: series, Galerkin/Ulam, PINNs and RVPINNs solvers."""

__version__ = "0.1.0"
