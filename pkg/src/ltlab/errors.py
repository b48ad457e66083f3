"""Exception taxonomy.

Every failure mode that a caller might want to catch separately gets its own
class.  All of them derive from LtlabError so a harness can catch the lot.
Precision-exhaustion style failures additionally derive from PrecisionFailure
so the CLI can map them to a dedicated exit code.
"""


class LtlabError(Exception):
    pass


class ConfigError(LtlabError):
    pass


# ---- context construction ----

class NotPrime(ConfigError):
    pass


class ReducibleModulus(ConfigError):
    pass


class NotEisenstein(ConfigError):
    pass


# ---- precision-style failures (CLI exit code 2) ----

class PrecisionFailure(LtlabError):
    pass


class PrecisionExhausted(PrecisionFailure):
    pass


class DivisionByIndistinguishableZero(PrecisionFailure):
    pass


class IndeterminateValuation(PrecisionFailure):
    pass


class NoStabilization(PrecisionFailure):
    pass


class ThresholdTooHigh(PrecisionFailure):
    pass


# ---- structural misuse ----

class RingMismatch(LtlabError):
    pass


class NonzeroConstantTerm(LtlabError):
    pass


class NonUnitLinearCoefficient(LtlabError):
    pass


class NonUnitConstantTerm(LtlabError):
    pass


class NonPositiveValuationPoint(LtlabError):
    pass


class NonzeroRemainder(LtlabError):
    pass


class HenselCriterionFailed(LtlabError):
    pass


class NotLubinTate(LtlabError):
    pass


class NotInGhostImage(LtlabError):
    pass


# ---- violated mathematical claims (hard errors, never warnings) ----

class ClaimViolation(LtlabError):
    pass


class IntegralityViolation(ClaimViolation):
    pass


class CongruenceViolation(ClaimViolation):
    pass


class RouteMismatch(ClaimViolation):
    pass


class InvarianceViolation(ClaimViolation):
    pass


class HypothesisViolated(ClaimViolation):
    pass
