"""Active cross-domain self-localization with pole-like landmarks, in a 1D simulator."""

__version__ = "0.1.0"
