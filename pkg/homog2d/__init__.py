"""
homog2d: periodic homogenization toolkit for 2D elliptic systems.
"""

__version__ = "0.1.0"
