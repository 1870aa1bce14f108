"""Trust-scored secure information sharing between agencies."""

__version__ = "0.1.0"
