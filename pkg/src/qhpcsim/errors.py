class SimulationError(RuntimeError):
    """Internal numerical failure, e.g. a measurement on a zero-norm branch."""


class CircuitValidationError(ValueError):
    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class DeviceError(RuntimeError):
    """Device misuse: qubit overflow, busy device, closed session."""


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
