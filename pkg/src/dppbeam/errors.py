"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class NotPositiveDefiniteError(InvalidInputError):
    """Cholesky factorization hit a pivot at or below tolerance.

    ``pivot`` is the zero-based index of the failing diagonal entry and
    ``value`` the offending pivot value.
    """

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot} = {value:.3e} <= tolerance"
        )


class ConvergenceError(RuntimeError):
    """An iterative numeric routine failed to converge."""


class RankDeficiencyError(RuntimeError):
    """Greedy selection ran out of candidates with positive marginal gain.

    ``selected`` holds how many items were chosen before the failure.
    """

    def __init__(self, selected: int, requested: int):
        self.selected = selected
        self.requested = requested
        super().__init__(
            f"kernel is rank deficient: only {selected} of {requested} items have "
            "positive marginal gain"
        )


class SearchSpaceError(InvalidInputError):
    """Exhaustive enumeration was refused because the subset count is too large.

    ``count`` is the computed search-space size.
    """

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"search space of {count} subsets exceeds the cap of {cap}")


class ConfigError(InvalidInputError):
    """A configuration document failed validation; message names the field."""
