"""Homoenergetic flows: kinematics, moment asymptotics and toy kinetic models."""

__version__ = "0.1.0"
