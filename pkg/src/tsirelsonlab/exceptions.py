class Refusal(RuntimeError):
    """The engine declines to answer the request as posed."""

    ...


class BudgetExceeded(Refusal):
    """Answering would exceed the configured size budget."""

    ...


class UnsupportedFamily(Refusal):
    """The norming-set family is outside this operation's scope."""

    ...


class PreconditionFailed(ValueError):
    """A documented precondition of the operation does not hold."""

    ...


class Inapplicable(PreconditionFailed):
    """The hypotheses of a lemma-level check are not satisfied."""

    ...


class DuplicateIndex(ValueError):
    """The same basis index was given more than once."""

    ...


class NonMonotoneMap(ValueError):
    """An index map is not strictly increasing where it must be."""

    ...


class InvalidTree(ValueError):
    """A functional tree is malformed or not a member of its family."""

    ...


class AuditFailure(RuntimeError):
    """A verified inequality failed its exact re-check."""

    ...


class RegistryCorruption(AuditFailure):
    """The coding registry lost injectivity or its growth condition."""

    ...
