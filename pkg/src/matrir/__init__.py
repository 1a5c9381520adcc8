"""matrir: material-conditioned binaural room impulse response toolkit."""

__version__ = "0.1.0"
