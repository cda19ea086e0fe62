class PowerMinInfeasible(RuntimeError):
    """The SINR targets cannot be met; ``report`` is the ConstraintReport at
    the last iterate."""

    def __init__(self, message, report=None, trace=None, state=None):
        super().__init__(message)
        self.report = report
        self.trace = trace
        self.state = state


class InfeasibleStart(PowerMinInfeasible):
    pass
