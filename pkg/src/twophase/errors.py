"""Exception types raised across the package."""


class TwoPhaseError(Exception):
    pass


class NonUniqueProjection(TwoPhaseError):
    """Point lies outside the tube where the closest-point map is single-valued."""


class ClearanceTooSmall(TwoPhaseError):
    pass


class NotStarShaped(TwoPhaseError):
    pass


class MeshGenerationError(TwoPhaseError):
    """The radial mesher could not triangulate the rings (interface too wiggly for target_h)."""


class JacobianFlip(TwoPhaseError):
    """An element map lost positivity of its Jacobian determinant."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = tuple(int(e) for e in elements)


class SingularSystem(TwoPhaseError):
    pass


class ReferenceMismatch(TwoPhaseError):
    pass


class ParseError(TwoPhaseError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ValidationError(TwoPhaseError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class MeshFormatError(TwoPhaseError):
    pass
