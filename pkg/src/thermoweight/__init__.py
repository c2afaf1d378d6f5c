"""Pressure brackets and equilibrium cylinder tables along towers of one-block SFT factors."""

__version__ = "0.1.0"
