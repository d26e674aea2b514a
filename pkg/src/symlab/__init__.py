"""symlab: a verification lab for symmetric random unitaries and the
hardness of recognizing scrambled order."""

__version__ = "0.1.0"
