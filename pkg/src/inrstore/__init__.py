"""inrstore: train implicit neural shape representations, embed, retrieve."""

__version__ = "0.1.0"
