"""Typed errors raised across the pipeline.

Every error carries a short ``code`` so the CLI can print a one-line,
machine-parsable message (``error: <code>: <detail>``).
"""


class PatcherizerError(Exception):
    code = "PatcherizerError"

    def __init__(self, message=""):
        super().__init__(message)
        self.message = message

    def one_line(self):
        msg = " ".join(str(self.message).split())
        return f"error: {self.code}: {msg}"


def _make(name, base=PatcherizerError):
    return type(name, (base,), {"code": name})


EmptyInput = _make("EmptyInput")
MalformedDiff = _make("MalformedDiff")
ContextMismatch = _make("ContextMismatch")
SchemaError = _make("SchemaError")
CorpusEmpty = _make("CorpusEmpty")
UnknownId = _make("UnknownId")
ShapeMismatch = _make("ShapeMismatch")
NonScalarLoss = _make("NonScalarLoss")
AllMaskedSource = _make("AllMaskedSource")
EmptyAfterPrune = _make("EmptyAfterPrune")
NonSymmetric = _make("NonSymmetric")
MissingBugReport = _make("MissingBugReport")
LengthMismatch = _make("LengthMismatch")
EmptyIndex = _make("EmptyIndex")
EmptyReference = _make("EmptyReference")
MissingConfigKey = _make("MissingConfigKey")
CheckpointMismatch = _make("CheckpointMismatch")


class FileNotFound(PatcherizerError, FileNotFoundError):
    code = "FileNotFound"


class ParseError(PatcherizerError):
    """Mini-language syntax error.

    ``side`` is set to ``"before"`` or ``"after"`` when raised while
    preprocessing a patch.
    """

    code = "ParseError"

    def __init__(self, message, line=0, column=0, expected=(), side=None):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        self.side = side
        detail = f"{message} at {line}:{column}"
        if self.expected:
            detail += " (expected " + ", ".join(sorted(self.expected)) + ")"
        if side:
            detail = f"{side}: {detail}"
        super().__init__(detail)
