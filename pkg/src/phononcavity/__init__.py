"""Forward simulation and parameter extraction for a SAW phonon cavity coupled to a transmon."""

__version__ = "0.1.0"
