"""Multi-camera collaborative depth refinement via depth-basis weights."""

__version__ = "0.1.0"
