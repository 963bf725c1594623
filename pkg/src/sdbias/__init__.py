"""Static vs. dynamic bias probing for spatiotemporal networks."""

__version__ = "0.1.0"
