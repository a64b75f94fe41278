"""Exception hierarchy.

``InputError`` subclasses mean the caller handed us something malformed
(the CLI maps them to exit code 2). Everything else under ``OverdetError``
is a computational outcome.
"""


class OverdetError(Exception):
    pass


class InputError(OverdetError):
    pass


class ParseError(InputError):
    """Malformed polynomial or file text. ``offset`` is a byte offset."""

    def __init__(self, message, offset=None, source=None):
        self.reason = message
        self.offset = offset
        self.source = source
        where = "" if offset is None else f" at offset {offset}"
        super().__init__(f"{message}{where}")


class UnknownVariable(ParseError):
    def __init__(self, name, offset=None):
        self.name = name
        super().__init__(f"unknown variable {name!r}", offset)


class BadParams(InputError):
    pass


class DegreeOverflow(OverdetError):
    pass


class PoleError(OverdetError):
    def __init__(self, message, point=None):
        self.point = point
        super().__init__(message)


class NotAPermutation(OverdetError):
    pass


class DegreeMismatch(OverdetError):
    pass


class MissingC(OverdetError):
    pass


class MissingA3(OverdetError):
    pass


class NotHermitian(OverdetError):
    pass


class CompatibilityError(OverdetError):
    pass


class CoverGap(OverdetError):
    pass


class GlueDefect(OverdetError):
    pass
