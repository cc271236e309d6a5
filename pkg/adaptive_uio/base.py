from abc import ABCMeta, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Any, ClassVar

import numpy as np
from numpy.typing import NDArray
from typing_extensions import Self

FloatArray = NDArray[np.float64]


class UIOError(Exception):
    """Raised when a pipeline stage encounters an error."""

    exit_code: ClassVar[int] = 1

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class ConfigError(UIOError):
    """Malformed scenario, bad dimensions or out-of-range settings."""

    exit_code = 2


class AssumptionError(ConfigError):
    """One or more structural assumptions on the plant or generator are violated."""


class GainDesignError(ConfigError):
    """The observer gains cannot be synthesized for the given plant."""


class DivergenceError(UIOError):
    """A simulated quantity left its admissible region."""

    exit_code = 3

    def __init__(self, message: str, *, time: float):
        self.time = time
        super().__init__(f"{message} (t = {time:.6g} s)")


class StreamingStage(metaclass=ABCMeta):
    """Abstract base class for single-owner stages advanced once per sample."""

    name: ClassVar[str]

    @abstractmethod
    def reset(self) -> None:
        """Returns the stage to its initial state."""
        ...

    @abstractmethod
    def step(self, *args: Any, **kwargs: Any) -> Any:
        """Consumes one sample and advances the internal state by one dt."""
        ...


@dataclass(kw_only=True, frozen=True)
class Record:
    """Immutable result record shared between stages."""

    def replace(self, **kwargs: Any) -> Self:
        """Returns a new record with the given fields replaced."""
        return replace(self, **kwargs)


@dataclass(kw_only=True, frozen=True)
class AssumptionReport(Record):
    """Outcome of the structural checks run before a scenario."""

    observability_rank: int = 0
    input_rank: int = 0
    output_rank: int = 0
    relative_degree: int | None = None
    generator_dims: tuple[int, int] = (0, 0)
    violations: tuple[str, ...] = field(default_factory=tuple)
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return not self.violations
