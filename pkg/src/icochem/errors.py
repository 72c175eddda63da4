"""Exception types shared across the icochem package."""


class IcochemError(Exception):
    """Base class for all icochem errors."""


# --- geometry ---------------------------------------------------------------

class LevelTooLarge(IcochemError):
    """Requested icosphere level exceeds the supported maximum."""


class AmbiguousMatch(IcochemError):
    """Two candidate faces tie when matching rotated face centers."""


class LengthMismatch(IcochemError):
    """A per-face signal does not match the mesh face count."""


class ZeroDirection(IcochemError):
    """A zero vector cannot be located on the sphere."""


# --- molecular I/O ----------------------------------------------------------

class ParseError(IcochemError):
    """Malformed structure file.

    ``line`` is the 1-based line number of the offending record when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownElement(ParseError):
    """Element symbol not present in the mass table."""


class EmptyMolecule(IcochemError):
    """Structure contains no atoms."""


class NotARotation(IcochemError):
    """Matrix is not orthonormal with determinant +1."""


# --- projection -------------------------------------------------------------

class AtomAtCenter(IcochemError):
    """An atom sits at the icosphere center; its ray is undefined."""


# --- augmentation -----------------------------------------------------------

class NotEnoughConformers(IcochemError):
    """Molecule has fewer conformers than the plan requires."""


class CadenceTooLarge(IcochemError):
    """Requested more nets than the generated sequence contains."""


# --- datastore --------------------------------------------------------------

class DatastoreError(IcochemError):
    """Base class for container-file errors."""


class MixedLevels(DatastoreError):
    """Records with different icosphere levels in one dataset."""


class LabelMismatch(DatastoreError):
    """Label table does not cover every molecule in the stream."""


class StatsMismatch(DatastoreError):
    """Statistics maps do not match the dataset dimensions."""


class FileFormatError(DatastoreError):
    """Container file is not in a recognised format."""


# --- analysis ---------------------------------------------------------------

class DegenerateVariance(IcochemError):
    """Pearson correlation undefined; RMSE/MAE are still attached.

    Carries the computable parts of the report as ``rmse``, ``mae`` and ``n``.
    """

    def __init__(self, message, rmse=None, mae=None, n=None):
        super().__init__(message)
        self.rmse = rmse
        self.mae = mae
        self.n = n
