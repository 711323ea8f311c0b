"""copyforge: desk-scale product copywriting pipeline."""

__version__ = "0.1.0"
