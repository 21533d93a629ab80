class RenderError(Exception):
    pass


class SceneParseError(RenderError):
    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SceneValidationError(RenderError):
    pass


class ProtocolError(RenderError):
    pass


class PartitionError(RenderError, ValueError):
    pass


class ImageValidationError(RenderError, ValueError):
    pass


class SimulationError(RenderError):
    pass


class ConfigError(RenderError):
    pass
