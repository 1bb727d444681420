class ExportError(Exception):
    """Any failure while building, exporting, or dumping a network."""
