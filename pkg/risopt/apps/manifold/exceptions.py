import numpy as np


class DegenerateRetractionError(ArithmeticError):
    def __init__(self, indices):
        super().__init__(f"cannot retract zero entries at {list(indices)}")
        self.indices = list(indices)


class NonFiniteObjectiveError(ArithmeticError):
    def __init__(self, iteration: int, phi: np.ndarray, value=None):
        super().__init__(
            f"objective or gradient not finite at iteration {iteration} (value={value})"
        )
        self.iteration = iteration
        self.phi = np.array(phi, copy=True)
        self.value = value
