class DirichletError(Exception):
    pass


class DomainError(DirichletError, ValueError):
    """
    An argument lies outside the domain of the function.
    """


class NormalizationError(DomainError):
    """
    A vector or matrix row that should be a probability distribution is not one.
    """


class ShapeError(DirichletError, ValueError):
    pass


class NumericError(DirichletError, ArithmeticError):
    """
    A computation produced non-finite values.

    `layer` is set for encoder failures, `index` for per-element failures
    such as a (row, component) pair of a log-density table.
    """

    def __init__(self, message, layer=None, index=None):
        self.layer = layer
        self.index = index
        detail = []
        if layer is not None:
            detail.append('layer %s' % layer)
        if index is not None:
            detail.append('at %s' % (index,))
        if detail:
            message = "%s (%s)" % (message, ', '.join(detail))
        super().__init__(message)


class DecompositionError(NumericError):
    """
    Cholesky factorization failed; `pivot` is the zero-based index of the
    leading minor that is not positive definite.
    """

    def __init__(self, message, pivot):
        self.pivot = pivot
        super().__init__("%s (pivot %d)" % (message, pivot))
