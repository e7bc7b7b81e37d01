"""Secret key generation over IRS-assisted channels: geometry, statistics, rates and probing-time optimization."""

__version__ = "0.1.0"
