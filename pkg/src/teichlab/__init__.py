"""Numerical toolkit for quasiconformal maps, Bers coordinates and Weil-Petersson bounds."""

__version__ = "0.1.0"
