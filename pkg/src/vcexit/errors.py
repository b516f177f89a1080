"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class VcExitError(Exception):
    """Base class for all errors raised by vcexit."""


class InputError(VcExitError):
    """Input data could not be used as given (maps to CLI exit code 2)."""


# timeline


class MalformedRecord(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class DuplicateEvent(InputError):
    pass


class NegativePrice(MalformedRecord):
    pass


class UnknownFirm(VcExitError, KeyError):
    def __str__(self) -> str:
        return f"unknown firm: {self.args[0]!r}"


class MonthOutOfRange(VcExitError, IndexError):
    pass


# filings


class EmptyName(VcExitError, ValueError):
    pass


class EmptySeries(VcExitError, ValueError):
    pass


class EmptyInput(VcExitError, ValueError):
    pass


# agents


class DecisionError(VcExitError):
    pass


class AmbiguousDecision(DecisionError):
    pass


class InvalidWindow(DecisionError, ValueError):
    pass


class MissingPlaceholder(VcExitError, ValueError):
    pass


class EmptyPacket(VcExitError, ValueError):
    pass


class ScriptExhausted(VcExitError):
    pass


class ClientError(VcExitError):
    pass


class EndpointUnreachable(ClientError):
    pass


class NonSuccessStatus(ClientError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body[:200]
        super().__init__(f"endpoint returned HTTP {status}: {self.body}")


class CacheCorrupt(ClientError):
    pass


# evaluation


class EmptySequence(VcExitError, ValueError):
    pass


class InvertedRange(VcExitError, ValueError):
    pass


class MissingActualExit(VcExitError):
    pass


class LengthMismatch(VcExitError, ValueError):
    pass


class DegenerateInput(VcExitError, ValueError):
    pass
