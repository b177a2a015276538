"""Image to spray-paint stencil pipeline."""

__version__ = "0.1.0"
