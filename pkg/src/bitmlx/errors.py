"""Exception types shared across the toolchain."""

from __future__ import annotations


class BitmlxError(Exception):
    """Base class for every error raised by this package."""


class ParseError(BitmlxError):
    def __init__(self, message: str, line: int = 0, column: int = 0, origin: str = "<string>"):
        self.message = message
        self.line = line
        self.column = column
        self.origin = origin
        super().__init__(f"{origin}:{line}:{column}: {message}")


class MacroRecursionError(ParseError):
    """A macro expansion did not reach a base case within the expansion bound."""


class UnboundSecret(BitmlxError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"secret {name!r} has no revealed length")


class NotWellFormed(BitmlxError):
    def __init__(self, report):
        self.report = report
        lines = "; ".join(f"{v.rule} at {v.label}: {v.message}" for v in report.violations)
        super().__init__(f"advertisement is not well-formed: {lines}")


class NotEnabled(BitmlxError):
    def __init__(self, action):
        self.action = action
        super().__init__(f"action not enabled: {action}")


class NonPositiveDelay(BitmlxError):
    def __init__(self, amount: int):
        self.amount = amount
        super().__init__(f"delay must be positive, got {amount}")


class Stuck(BitmlxError):
    """No conforming action exists although the run is not finished."""


class IncoherentInput(BitmlxError):
    """The coherent BitMLx run cannot be extended to mirror an intermediate step."""


class DistanceNotDecreasing(BitmlxError):
    def __init__(self, action, before, after):
        self.action = action
        self.before = before
        self.after = after
        super().__init__(f"liquidation distance did not decrease on {action}")


class UnknownRoot(BitmlxError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"no advertisement for the root of {label}")


class InvalidBaseStrategy(BitmlxError):
    """The BitMLx strategy handed to the strategy compiler broke one of its invariants."""
