"""Linear-optics simulation of a post-selected Bell test with photons from independent sources."""

__version__ = "0.1.0"
