class SubproblemFailure(RuntimeError):
    """A block update could not produce a usable iterate.

    ``trace`` and ``state`` carry the partial solve for the caller.
    """

    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = trace
        self.state = state
