"""Exception hierarchy.

Every error raised by the library derives from :class:`EntropicMFError` and
carries the name of the module it originated in, so the CLI can surface
provenance and map errors onto exit codes.
"""

from __future__ import annotations


class EntropicMFError(Exception):
    module = "entropic_mf"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class InputError(EntropicMFError):
    """Bad user input (exit code 4)."""


class InternalCheckError(EntropicMFError):
    """An internal cross-check disagreed (exit code 3)."""


# markov_core


class GeneratorError(InputError, ValueError):
    module = "markov"


class NegativeOffDiagonal(GeneratorError):
    def __init__(self, i: int, j: int, value: float):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"negative off-diagonal rate D[{i},{j}] = {value!r}")


class RowSumNonzero(GeneratorError):
    def __init__(self, i: int, residual: float):
        self.i, self.residual = i, residual
        super().__init__(f"row {i} sums to {residual!r}, expected 0")


class NotIrreducible(GeneratorError):
    def __init__(self, description: str):
        self.description = description
        super().__init__(f"support graph is not strongly connected: {description}")


class SingularSolve(InternalCheckError):
    module = "markov"


class SingularAtS(EntropicMFError, ValueError):
    module = "markov"

    def __init__(self, s: complex):
        self.s = s
        super().__init__(f"sI - D is singular at s = {s!r}")


class UncenteredRhsAtZero(EntropicMFError, ValueError):
    module = "markov"

    def __init__(self, mean: float):
        self.mean = mean
        super().__init__(f"s = 0 needs a pi-centered right-hand side, got pi-mean {mean!r}")


class DisconnectedDraw(EntropicMFError, RuntimeError):
    module = "markov"


# entropic_control


class EigenSolveFailure(InternalCheckError):
    module = "control"


# linearization


class CrossCheckFailure(InternalCheckError):
    module = "linear"


class DegenerateSystem(EntropicMFError, ValueError):
    module = "linear"


class SearchExhausted(EntropicMFError):
    """No positive-real or minimum-phase violation was found within budget."""

    module = "linear"

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


# meanfield / population


class StepRejected(EntropicMFError, RuntimeError):
    module = "meanfield"

    def __init__(self, t: float, detail: str):
        self.t = t
        super().__init__(f"RK4 step at t = {t!r} rejected: {detail}")


class RateBoundExceeded(EntropicMFError, RuntimeError):
    module = "population"

    def __init__(self, t: float, x: int, rate: float, bound: float):
        self.t, self.x, self.rate, self.bound = t, x, rate, bound
        super().__init__(
            f"exit rate {rate!r} of state {x} at t = {t!r} exceeds dominating rate {bound!r}"
        )


class GridMismatch(EntropicMFError, ValueError):
    module = "population"


class ConfigParse(InputError):
    module = "config"

    def __init__(self, line: int | None, message: str):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
