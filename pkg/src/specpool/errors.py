"""Exception hierarchy shared by all modules."""


class SpecpoolError(Exception):
    """Base class. ``code`` is the machine-readable name used by the CLI."""

    @property
    def code(self):
        return type(self).__name__


# mesh
class ParseError(SpecpoolError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class MeshIndexError(SpecpoolError, IndexError):
    pass


class EmptyMesh(SpecpoolError):
    pass


class DegenerateFace(SpecpoolError):
    pass


class DegenerateExtent(SpecpoolError):
    pass


class ZeroAreaFace(SpecpoolError):
    pass


class IsolatedVertex(SpecpoolError):
    pass


# spectral / descriptors
class DimensionMismatch(SpecpoolError, ValueError):
    pass


class ConvergenceFailure(SpecpoolError):
    pass


class KTooLarge(SpecpoolError, ValueError):
    pass


class KTooSmall(SpecpoolError, ValueError):
    pass


# fmap
class KExceedsBasis(SpecpoolError, ValueError):
    pass


class NonFiniteEnergy(SpecpoolError, FloatingPointError):
    pass


class OrientationError(SpecpoolError, ValueError):
    """Source/target ids of composed maps do not line up."""


class SingularSystemWarning(UserWarning):
    pass


# network
class DisconnectedGraph(SpecpoolError):
    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        super().__init__(f"functional map network is disconnected: components {self.components}")


class MissingReverseMap(SpecpoolError):
    pass


class SizeMismatch(SpecpoolError, ValueError):
    pass


class EigenFailure(SpecpoolError):
    pass


class K2TooLarge(SpecpoolError, ValueError):
    pass


# pooling / latent
class RankDeficientBasisWarning(UserWarning):
    pass


class CclbMismatch(SpecpoolError, ValueError):
    pass


class WrongFeatureKind(SpecpoolError, ValueError):
    pass


class EmptyTerms(SpecpoolError, ValueError):
    pass


class TooFewCodes(SpecpoolError, ValueError):
    pass


# container / pipeline
class BadMagic(SpecpoolError):
    pass


class TruncatedPayload(SpecpoolError):
    pass


class DuplicateName(SpecpoolError, ValueError):
    pass


class ManifestError(SpecpoolError):
    pass


class MissingPrerequisite(SpecpoolError):
    pass


class StalePrerequisite(SpecpoolError):
    pass
