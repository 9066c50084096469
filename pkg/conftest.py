"""
Shared fixtures: the Neumann pi/12 waveguide of the rectangle experiments, its
47-frequency grid and noise-free data.
"""
import math
from pathlib import Path

import pytest

from config.schema import load_config
from wgfm.event_bus import event_bus
from wgfm.modal import BoundaryKind, Waveguide
from wgfm.synth import (
    FrequencyGrid,
    MeasurementConfig,
    QuadratureRule,
    SourceSpec,
    rectangle,
    synthesize_dataset,
)

PRESETS = Path(__file__).parent / "presets"

RECT_RANGE = (0.5, 1.0)


@pytest.fixture
def neumann() -> Waveguide:
    return Waveguide(math.pi / 12, BoundaryKind.NEUMANN)


@pytest.fixture
def mixed() -> Waveguide:
    return Waveguide(math.pi / 12, BoundaryKind.MIXED_DIRICHLET_TOP)


@pytest.fixture
def rect_source() -> SourceSpec:
    return SourceSpec.uniform([rectangle(RECT_RANGE, (0.05, 0.2))])


@pytest.fixture
def xstar() -> MeasurementConfig:
    return MeasurementConfig(10.0, 0.1)


@pytest.fixture
def grid47() -> FrequencyGrid:
    return FrequencyGrid(0.0, 12.0, 48, vertex=True)


@pytest.fixture
def quad(neumann) -> QuadratureRule:
    return QuadratureRule.default(neumann)


@pytest.fixture
def clean_data(neumann, rect_source, xstar, grid47, quad):
    return synthesize_dataset(neumann, rect_source, xstar, grid47, quad)


@pytest.fixture
def preset():
    def load(name: str):
        return load_config(PRESETS / f"{name}.json")
    return load


@pytest.fixture
def bus():
    """The process event bus, cleared before and after the test."""
    event_bus.reset()
    yield event_bus
    event_bus.reset()
