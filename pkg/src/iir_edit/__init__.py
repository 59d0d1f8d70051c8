"""Text-conditioned diffusion image editor with selective color/texture
information removal in the condition path."""

__version__ = "0.1.0"
