"""Geometric simulation of a spacecraft that deploys a sub-spacecraft on a
long elastic tether in orbit."""

__version__ = "0.1.0"
