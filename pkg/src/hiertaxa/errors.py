"""Exception hierarchy.

Input and configuration problems derive from :class:`ValidationError`
(CLI exit code 2); failures while fitting or predicting derive from
:class:`LearnerError` (exit code 3).
"""


class HierTaxaError(Exception):
    pass


class ValidationError(HierTaxaError, ValueError):
    pass


class LearnerError(HierTaxaError, RuntimeError):
    pass


# taxonomy

class TaxonomyError(ValidationError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class EmptyTable(TaxonomyError):
    pass


class RaggedRow(TaxonomyError):
    pass


class ConflictingParent(TaxonomyError):
    pass


class ForeignNode(ValidationError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


# data and metrics

class EmptyInput(ValidationError):
    pass


class NoEligibleRecords(ValidationError):
    pass


class UnknownLeaf(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DuplicateImage(ValidationError):
    pass


class InsufficientSpecimens(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class RuleUnsupported(ValidationError):
    pass


# learners

class SingleClass(LearnerError):
    pass


class NonFiniteInput(LearnerError):
    pass
