"""Input-space geometry of small neural networks."""
__version__ = "0.1.0"
