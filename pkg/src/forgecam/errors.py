"""Exception hierarchy.  Every error carries the name of the module that raised it."""


class ForgecamError(Exception):
    module = "forgecam"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class DieModelError(ForgecamError):
    module = "die_model"


class TopologyError(ForgecamError):
    module = "topology"


class AmbiguousDihedralError(TopologyError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ClassificationError(ForgecamError):
    module = "bmfe"


class ToolpathError(ForgecamError):
    module = "toolpath"


class PlanningError(ForgecamError):
    module = "ppg"


class GcodeParseError(ForgecamError):
    module = "cli_io"

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
