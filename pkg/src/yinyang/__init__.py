"""Link prediction with an unrolled energy-descent encoder driven by positive and sampled negative edges."""

__version__ = "0.1.0"
