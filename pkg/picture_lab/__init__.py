"""Lattice Dirac field laboratory comparing Heisenberg- and Schrodinger-picture energies under a gauge pulse."""

__version__ = "0.1.0"
