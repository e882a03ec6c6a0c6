"""Exception hierarchy shared by every otpbox module.

Each class carries an ``exit_code`` so the CLI can map failures onto stable
process exit statuses without a lookup table of its own.
"""


class OtpError(Exception):
    exit_code = 1


# -- input / format errors -------------------------------------------------

class InputError(OtpError):
    exit_code = 5


class ParseError(InputError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(InputError):
    pass


class ArityMismatch(InputError):
    pass


class MalformedRow(InputError):
    pass


class NonNumericId(InputError):
    pass


class UnknownAllele(InputError):
    pass


class RiskOverflow(InputError):
    pass


class RecordOverflow(InputError):
    pass


class EmptyVendorInput(InputError):
    pass


class InvalidPcr(InputError):
    pass


class InvalidMeasurement(InputError):
    pass


class SizeExceeded(InputError):
    pass


class ResourceLimit(OtpError):
    exit_code = 8


# -- TPM / TEE ---------------------------------------------------------------

class TpmError(OtpError):
    exit_code = 9


class PolicyMismatch(TpmError):
    exit_code = 4


class AuthFailure(TpmError):
    exit_code = 6


class IndexUndefined(TpmError):
    pass


class SessionActive(TpmError):
    exit_code = 7


class SessionRequired(TpmError):
    exit_code = 7


class MeasurementMismatch(TpmError):
    exit_code = 7


class StateCorrupt(TpmError):
    pass


# -- garbling / OTM ------------------------------------------------------------

class DecryptionFailure(OtpError):
    exit_code = 6


class OneTimeViolation(OtpError):
    exit_code = 3


class FlagAlreadyDefined(OtpError):
    exit_code = 10


class SimulatedCrash(Exception):
    """Raised by fault-injection hooks. Deliberately not an OtpError."""


class IndexExists(TpmError):
    pass
