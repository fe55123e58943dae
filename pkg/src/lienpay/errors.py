"""Exception hierarchy shared by every lienpay module.

Each error's class name doubles as its wire name: contract receipts and
rpc error messages carry ``type(err).__name__``.
"""


class LienpayError(Exception):
    """Base class for all lienpay errors."""

    @property
    def name(self):
        return type(self).__name__


# cas
class StorageFull(LienpayError):
    pass


class NotFound(LienpayError):
    pass


class IntegrityViolation(LienpayError):
    pass


# progress
class ParseError(LienpayError):
    pass


class RangeError(LienpayError):
    pass


class DuplicateGuid(LienpayError):
    pass


class UnknownCostCode(LienpayError):
    pass


class MissingPayee(LienpayError):
    pass


# ledger
class BadSignature(LienpayError):
    pass


class NonceMismatch(LienpayError):
    pass


class InsufficientFunds(LienpayError):
    pass


class UnknownTransaction(LienpayError):
    pass


class UnknownAccount(LienpayError):
    pass


# token
class UnauthorizedMinter(LienpayError):
    pass


class NotOwner(LienpayError):
    pass


class UnknownToken(LienpayError):
    pass


class Unauthorized(LienpayError):
    pass


# paycontract
class UnauthorizedPublisher(LienpayError):
    pass


class MalformedPayload(LienpayError):
    pass


class DuplicateUpdate(LienpayError):
    pass


class StaleCycle(LienpayError):
    pass


class AlreadyRedeemed(LienpayError):
    pass


class InsufficientEscrow(LienpayError):
    pass


class MissingSignature(LienpayError):
    pass


class UnknownKey(LienpayError):
    pass


# harness
class ScenarioParseError(LienpayError):
    pass


class ExpectationMismatch(LienpayError):
    def __init__(self, diffs):
        self.diffs = list(diffs)
        super().__init__("; ".join(self.diffs))


_BY_NAME = {
    cls.__name__: cls
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, LienpayError)
}


def error_class(name):
    """Look up an error class by its wire name (falls back to the base)."""
    return _BY_NAME.get(name, LienpayError)
