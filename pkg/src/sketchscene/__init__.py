"""Cross-domain scene embedding, search and layout synthesis on glyph scenes."""

__version__ = "0.1.0"
