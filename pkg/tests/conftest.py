import numpy as np
import pytest

from adaptive_uio.loop import run_pipeline
from adaptive_uio.numerics import Trajectory
from adaptive_uio.plant import ExoGenerator, HarmonicDisturbance, NoiseModel, Plant, simulate_plant, zero_input
from adaptive_uio.scenario import Scenario, builtin_scenario, with_overrides

K_TRUE = np.array([-1.0, -2.0, 4.0, -4.0, -8.0])


@pytest.fixture
def k_true() -> np.ndarray:
    """[ξ(0); ω²; ω²ξ(0)] of the worked example."""
    return K_TRUE.copy()


@pytest.fixture
def scenario() -> Scenario:
    return builtin_scenario("paper_sec5")


@pytest.fixture
def quick_scenario(scenario: Scenario) -> Scenario:
    """Worked example cut to half a second at a coarse step."""
    return with_overrides(scenario, {"simulation.dt": 1e-3, "simulation.t_end": 0.5})


@pytest.fixture
def plant(scenario: Scenario) -> Plant:
    return scenario.build_plant()


@pytest.fixture
def generator(scenario: Scenario) -> ExoGenerator:
    return scenario.build_generator()


@pytest.fixture
def disturbance(scenario: Scenario) -> HarmonicDisturbance:
    return scenario.build_disturbance()


@pytest.fixture
def truth(plant: Plant, generator: ExoGenerator, disturbance: HarmonicDisturbance) -> Trajectory:
    """Noise-free ground truth over ten seconds at dt = 1e-3."""
    return simulate_plant(
        plant,
        generator,
        disturbance,
        zero_input,
        NoiseModel(enabled=False),
        (0.0, 10.0),
        1e-3,
        [-2.0, 2.0],
    )


@pytest.fixture(scope="session")
def noise_free_run() -> tuple[Scenario, Trajectory]:
    scenario = with_overrides(
        builtin_scenario("paper_sec5"), {"noise.enabled": False, "simulation.dt": 1e-3}
    )
    return scenario, run_pipeline(scenario)
