class ScenarioConfigError(ValueError):
    """Invalid scenario configuration, preset name or channel dump."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class DomainError(ValueError):
    pass
