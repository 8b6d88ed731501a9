"""Exception hierarchy.

Two roots matter to callers: :class:`DataError` for malformed inputs and
:class:`BackendError` for failures talking to a language model. The CLI maps
them to distinct exit codes so orchestration can retry only the latter.
"""


class InterRvosError(Exception):
    pass


class DataError(InterRvosError):
    pass


class BackendError(InterRvosError):
    pass


# mask / metric errors
class ResolutionMismatch(DataError, ValueError):
    pass


class InvalidRle(DataError, ValueError):
    pass


class CountSumMismatch(InvalidRle):
    pass


# dataset errors
class ParseError(DataError):
    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class SchemaViolation(DataError):
    def __init__(self, rule, detail="", stage=None):
        self.rule = rule
        self.detail = detail
        self.stage = stage
        text = rule if not detail else f"{rule} ({detail})"
        if stage:
            text = f"[{stage}] {text}"
        super().__init__(text)


class UnknownExpression(DataError, KeyError):
    def __str__(self):
        return f"unknown expression {self.args[0]!r}"


class MissingTargetTrack(DataError):
    pass


class ConfigError(DataError, ValueError):
    pass


class FrameReadError(DataError):
    def __init__(self, index, reason=""):
        self.index = index
        super().__init__(f"cannot read frame {index}" + (f": {reason}" if reason else ""))


class UnknownIndex(DataError, KeyError):
    pass


# prompt / parsing errors
class MissingBinding(DataError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)

    def __str__(self):
        return f"no binding for placeholder {self.name!r}"


class ParseFailure(DataError):
    def __init__(self, item, raw_text, reason=""):
        self.item = item
        self.raw_text = raw_text
        self.reason = reason
        super().__init__(f"could not parse reply for {item}: {reason}")


class NotUnidirectional(DataError, ValueError):
    pass


# backend errors
class UnsupportedKind(BackendError):
    pass


class TransportError(BackendError):
    pass


class RateLimited(BackendError):
    def __init__(self, message="rate limited", retry_after=None):
        self.retry_after = retry_after
        super().__init__(message)
