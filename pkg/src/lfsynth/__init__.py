"""Single-image 4D light field synthesis with appearance flow."""

__version__ = "0.1.0"
