"""Exception types shared across the package.

Two families map onto the CLI exit codes: :class:`InputError` (bad data,
bad configuration, dimension mismatches -> exit 1) and
:class:`DiagnosticError` (a computation detected a numerical problem in
otherwise valid input -> exit 2).  Every exception carries a short
machine-readable ``code`` next to the human message.
"""


class MMHPError(Exception):
    """Base class for all package exceptions."""

    code = "error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class InputError(MMHPError, ValueError):
    """Invalid input: malformed data, bad dimensions, broken invariants."""

    code = "invalid-input"


class UnsupportedError(InputError):
    """Requested operation is outside the supported parameter range."""

    code = "unsupported"


class NonStationaryError(InputError):
    """Parameters violate the subcriticality condition beta < gamma."""

    code = "non-stationary"


class ReducibleChainError(InputError):
    """The rate matrix does not define a unique stationary distribution."""

    code = "reducible-chain"


class DiagnosticError(MMHPError, RuntimeError):
    """A numerical diagnostic fired during an otherwise valid computation."""

    code = "numerical-diagnostic"


class InvalidStateError(DiagnosticError):
    """An internal state became invalid (e.g. a nonpositive intensity)."""

    code = "invalid-state"


class DegeneratePosteriorError(DiagnosticError):
    """A posterior collapsed to the zero vector and cannot be normalized."""

    code = "degenerate-posterior"


class StabilityError(DiagnosticError):
    """The gauge-transformed recursions overflowed.

    Carries the last time at which the recursion was still stable and the
    log condition number (spread of the diagonal gauge logs) reached there.
    """

    code = "robust-overflow"

    def __init__(self, message, last_stable_time, condition_log):
        super().__init__(message)
        self.last_stable_time = last_stable_time
        self.condition_log = condition_log
