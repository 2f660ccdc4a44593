"""Figure generation for sbm result files."""

__version__ = "0.1.0"
