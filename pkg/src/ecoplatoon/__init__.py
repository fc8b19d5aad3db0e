"""Eco-driving distributed MPC for a four-truck heavy-duty platoon."""

__version__ = "0.1.0"
