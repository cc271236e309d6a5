"""Scenario schema, TOML loading and the builtin scenarios."""

import copy
import logging
import tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    ValidationError,
    model_validator,
)
from typing_extensions import Self

from .base import ConfigError
from .observer import GainMode, StartMode
from .plant import (
    AffineAlpha,
    AlphaFn,
    ExoGenerator,
    Harmonic,
    HarmonicDisturbance,
    InputFn,
    NoiseModel,
    Plant,
    SineInput,
    StepInput,
    unit_alpha,
    zero_input,
)

logger = logging.getLogger(__name__)

Matrix = list[list[float]]
Vector = list[float]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AlphaSpec(Section):
    kind: Literal["unit", "affine"] = "unit"
    offset: float = 1.0
    slope: float = 0.0

    def build(self) -> AlphaFn:
        if self.kind == "unit":
            return unit_alpha
        return AffineAlpha(offset=self.offset, slope=self.slope)


class PlantSpec(Section):
    A: Matrix
    B: Vector
    C: Vector
    x0: Vector
    alpha: AlphaSpec = AlphaSpec()


class GeneratorSpec(Section):
    H: Matrix
    Gamma: Matrix
    xi0: Vector


class HarmonicSpec(Section):
    amplitude: float
    frequency: PositiveFloat
    phase: float = 0.0


class NoiseSpec(Section):
    enabled: bool = False
    mean: float = 0.0
    variance: NonNegativeFloat = 0.0
    seed: int = Field(default=0, ge=0, lt=2**64)


class InputSpec(Section):
    kind: Literal["zero", "sine", "step"] = "zero"
    amplitude: float = 0.0
    frequency: PositiveFloat = 1.0
    time: NonNegativeFloat = 0.0

    def build(self) -> InputFn:
        match self.kind:
            case "sine":
                return SineInput(self.amplitude, self.frequency)
            case "step":
                return StepInput(self.amplitude, self.time)
            case _:
                return zero_input


class GainSpec(Section):
    poles: Vector | None = None
    observer_gain: Vector | None = None
    star: bool = False
    z0: Vector | None = None
    hold: Literal["foh", "zoh"] = "foh"
    derivatives: Literal["oracle", "dirty"] = "oracle"

    @model_validator(mode="after")
    def _needs_a_gain(self) -> Self:
        if self.poles is None and self.observer_gain is None:
            raise ValueError("gains need either `poles` or `observer_gain`")
        return self


class FilterSpec(Section):
    lam: PositiveFloat = 5.0
    lam_r: PositiveFloat = 5.0
    b_bar: Vector | None = None


class DremSpec(Section):
    h: PositiveFloat = 0.5
    eps: PositiveFloat = 1e-3
    sigma: PositiveFloat = 0.7
    t_freeze: NonNegativeFloat = 15.0
    warm_up: NonNegativeFloat | None = None
    harmonics: int = Field(default=1, ge=0)


class AmplitudeSpec(Section):
    h: PositiveFloat = 0.5
    eps: PositiveFloat = 1e-3


class ObserverSpec(Section):
    mode: GainMode = GainMode.FIXED
    K: Vector | None = None
    young: PositiveFloat = 1.0
    start: StartMode = StartMode.DEFERRED
    N0: Matrix | None = None
    x0: Vector | None = None
    bound: PositiveFloat = 1e6

    @model_validator(mode="after")
    def _fixed_needs_gain(self) -> Self:
        if self.mode is GainMode.FIXED and self.K is None:
            raise ValueError("fixed-gain observer needs `K`")
        return self


class SimulationSpec(Section):
    dt: PositiveFloat = 1e-4
    t_end: PositiveFloat = 30.0


class OutputSpec(Section):
    dir: str | None = None


def _divides(dt: float, t: float) -> bool:
    ratio = t / dt
    return abs(ratio - round(ratio)) <= 1e-6 * max(1.0, ratio)


class Scenario(Section):
    name: str = "custom"
    plant: PlantSpec
    generator: GeneratorSpec
    disturbance: list[HarmonicSpec] = Field(default_factory=list)
    noise: NoiseSpec = NoiseSpec()
    input: InputSpec = InputSpec()
    gains: GainSpec
    filters: FilterSpec = FilterSpec()
    drem: DremSpec = DremSpec()
    amplitude: AmplitudeSpec = AmplitudeSpec()
    observer: ObserverSpec
    simulation: SimulationSpec = SimulationSpec()
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _consistent(self) -> Self:
        dt = self.simulation.dt
        events = {"t_end": self.simulation.t_end, "t_freeze": self.drem.t_freeze}
        if self.drem.warm_up is not None:
            events["warm_up"] = self.drem.warm_up
        for label, t in events.items():
            if not _divides(dt, t):
                raise ValueError(f"dt = {dt} does not divide {label} = {t}")
        if self.drem.harmonics > 1:
            raise ValueError(
                "only zero or one disturbance harmonic can be identified, the multiharmonic annihilator is not implemented"
            )
        return self

    def build_plant(self) -> Plant:
        return Plant(A=self.plant.A, B=self.plant.B, C=self.plant.C, alpha=self.plant.alpha.build())

    def build_generator(self) -> ExoGenerator:
        return ExoGenerator(H=self.generator.H, Gamma=self.generator.Gamma, xi0=self.generator.xi0)

    def build_disturbance(self) -> HarmonicDisturbance:
        return HarmonicDisturbance(
            tuple(Harmonic(h.amplitude, h.frequency, h.phase) for h in self.disturbance)
        )

    def build_noise(self) -> NoiseModel:
        n = self.noise
        return NoiseModel(mean=n.mean, variance=n.variance, seed=n.seed, enabled=n.enabled)

    def build_input(self) -> InputFn:
        return self.input.build()


def parse_scenario(data: dict[str, Any]) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid scenario: {e}") from e


def load_scenario(path: str | Path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read scenario file {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed scenario file {path}: {e}") from e
    scenario = parse_scenario(data)
    logger.info("loaded scenario %r from %s", scenario.name, path)
    return scenario


WORKED_EXAMPLE: dict[str, Any] = {
    "name": "paper_sec5",
    "plant": {
        "A": [[0.0, 1.0], [-1.0, -2.0]],
        "B": [0.0, 1.0],
        "C": [1.0, 0.0],
        "x0": [-2.0, 2.0],
    },
    "generator": {
        "H": [[2.0, 0.0], [3.0, 0.0]],
        "Gamma": [[0.0, 1.0], [-36.0, 0.0]],
        "xi0": [-1.0, -2.0],
    },
    "disturbance": [{"amplitude": 5.0, "frequency": 2.0, "phase": 0.0}],
    "noise": {"enabled": True, "mean": 0.01, "variance": 0.001, "seed": 2024},
    "gains": {
        "poles": [-15.0, -10.0],
        "observer_gain": [25.0, 125.0],
        "z0": [-0.5, 0.5],
    },
    "filters": {"lam": 5.0, "lam_r": 5.0, "b_bar": [1.0, 1.0]},
    "drem": {"h": 0.5, "eps": 1e-3, "sigma": 0.7, "t_freeze": 15.0, "warm_up": 2.0},
    "amplitude": {"h": 0.5, "eps": 1e-3},
    "observer": {"mode": "fixed", "K": [23.0, 103.0], "young": 1.0, "start": "deferred"},
    "simulation": {"dt": 1e-4, "t_end": 30.0},
}


def _riccati_variant() -> dict[str, Any]:
    data = copy.deepcopy(WORKED_EXAMPLE)
    data["name"] = "paper_sec5_riccati"
    data["observer"] = {"mode": "riccati", "young": 1.0, "start": "deferred"}
    return data


BUILTIN_SCENARIOS: dict[str, dict[str, Any]] = {
    "paper_sec5": WORKED_EXAMPLE,
    "paper_sec5_riccati": _riccati_variant(),
}


def builtin_scenario(name: str) -> Scenario:
    data = BUILTIN_SCENARIOS.get(name)
    if data is None:
        raise ConfigError(
            f"unknown builtin scenario {name!r}, choose from {sorted(BUILTIN_SCENARIOS)}"
        )
    return parse_scenario(copy.deepcopy(data))


def with_overrides(scenario: Scenario, overrides: Mapping[str, Any]) -> Scenario:
    """Returns a re-validated copy with dotted-path fields replaced, e.g. drem.h=0.3."""
    data = scenario.model_dump(mode="python")
    for dotted, value in overrides.items():
        node: Any = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"unknown scenario field {dotted!r}")
            node = node[key]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"unknown scenario field {dotted!r}")
        node[leaf] = value
    return parse_scenario(data)
