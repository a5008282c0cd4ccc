"""Cross-document relation extraction with bridge-entity filtering and cross-path relation attention."""

__version__ = "0.1.0"
