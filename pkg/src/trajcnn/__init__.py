"""Reversible trajectory <-> image encoding and a DCGAN for synthetic trajectories."""
__version__ = "0.1.0"
