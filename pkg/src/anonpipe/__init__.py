"""anonpipe: attribute-preserving face video anonymization engine."""

__version__ = "0.1.0"

PROTOCOL_VERSION = "v1"
