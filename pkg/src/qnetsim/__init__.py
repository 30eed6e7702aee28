"""State-vector simulation of quantum-network correlation experiments."""

__version__ = "0.1.0"
