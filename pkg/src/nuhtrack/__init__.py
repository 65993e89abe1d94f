"""Multi-object tracking by dense-structure search on non-uniform hypergraphs."""

__version__ = "0.1.0"
