"""Network-coded correlated sources: encoding, BP decoding and MAP error bounds."""

__version__ = "0.1.0"
