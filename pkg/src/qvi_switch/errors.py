"""Exception hierarchy.

Input problems derive from ``InputError`` (CLI exit code 2); failed
mathematical claims derive from ``VerificationError`` (CLI exit code 1).
"""


class QviError(Exception):
    pass


class InputError(QviError, ValueError):
    pass


class NonStochasticRow(InputError):
    pass


class RewardOutOfBounds(InputError):
    pass


class BadGamma(InputError):
    pass


class IndexOutOfRange(InputError, IndexError):
    pass


class BadEpsilon(InputError):
    pass


class NonPositiveW(InputError):
    pass


class TooManyPolicies(InputError):
    pass


class SingularEvaluation(QviError):
    pass


class NonConvergentSeries(QviError):
    pass


class VerificationError(QviError):
    pass


class BoundViolation(VerificationError):
    pass


class CertificateInvalid(VerificationError):
    def __init__(self, clause: str, message: str):
        super().__init__(f"{clause}: {message}")
        self.clause = clause


class ClaimViolation(VerificationError):
    def __init__(self, claim: str, k: int | None, slack: float):
        super().__init__(f"{claim} violated at k={k} (slack {slack:.3e})")
        self.claim = claim
        self.k = k
        self.slack = slack
