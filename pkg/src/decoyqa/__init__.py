"""Single-model protein quality assessment with a deep belief network."""

__version__ = "0.1.0"
