"""Steady-state entanglement of remote qubits driven by a two-mode squeezing amplifier."""
__version__ = "0.1.0"
