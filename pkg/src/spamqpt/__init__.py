"""Standard and SPAM-corrected quantum process tomography."""

__version__ = "0.1.0"
