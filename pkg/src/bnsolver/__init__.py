"""Isotropic Boltzmann-Nordheim solver and blow-up diagnostics."""
