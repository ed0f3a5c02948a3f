"""Simulation and analysis toolkit for the aircraft BBCU converter."""
__version__ = "0.1.0"
