class ConfgenError(Exception):
    """Base class for conformer-generation errors."""


class InvalidSmiles(ConfgenError):
    """SMILES string could not be parsed."""


class EmbeddingFailure(ConfgenError):
    """No 3-D embedding satisfied the molecular constraints."""


class FileFormatError(ConfgenError):
    """Container file is not a recognised net dataset."""
