"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: malformed input files -> 2,
violated preconditions -> 3, numerical faults -> 4.
"""


class GameFormatError(ValueError):
    """A game description (JSON document or raw tensors) is malformed."""


class SpecError(ValueError):
    """A call violates a documented precondition."""


class NumericalError(RuntimeError):
    """A computation failed numerically (NaN, divergence, internal solver fault)."""


class InconsistentObservationError(NumericalError):
    """A belief update conditioned on an observation with zero prior mass."""


class SimplexIterationError(NumericalError):
    """The simplex iteration cap was hit; distinct from an unbounded program."""

    def __init__(self, iterations: int):
        super().__init__(f"simplex did not terminate within {iterations} pivots")
        self.iterations = iterations


class IntegrationError(NumericalError):
    """An ODE integration step produced a non-finite state."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state at integration step {step}")
        self.step = step


class DivergenceError(NumericalError):
    """An iterative learner left its trusted numeric range."""

    def __init__(self, step: int, detail: str = ""):
        msg = f"divergence detected at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.step = step
