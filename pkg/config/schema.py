"""
wgfm - Run Configuration
JSON run files validated by pydantic models; unknown keys are rejected.
"""
import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .settings import settings


class ConfigError(Exception):
    """Exception for invalid run configuration files."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class PhysicsError(ValueError):
    """A physical constraint violated by an otherwise well-formed section."""

    def __init__(self, message: str, *loc: str):
        super().__init__(message)
        self.loc = loc


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


Pair = Tuple[float, float]


# --- Shapes ---

class RectangleShape(StrictModel):
    type: Literal["rectangle"]
    x1: Pair
    xperp: Pair


class LShapeShape(StrictModel):
    type: Literal["l_shape"]
    parts: Tuple[Tuple[Pair, Pair], Tuple[Pair, Pair]] = Field(
        ..., description="Two rectangles as ((x1_min, x1_max), (xperp_min, xperp_max))"
    )


class RhombusShape(StrictModel):
    type: Literal["rhombus"]
    center: Pair
    half_range: float = Field(..., gt=0)
    half_cross: float = Field(..., gt=0)


class DiscShape(StrictModel):
    type: Literal["disc"]
    center: Pair
    radius: float = Field(..., gt=0)


class PolygonShape(StrictModel):
    type: Literal["polygon"]
    vertices: List[Pair] = Field(..., min_length=3)


Shape = Annotated[
    Union[RectangleShape, LShapeShape, RhombusShape, DiscShape, PolygonShape],
    Field(discriminator="type"),
]


# --- Sections ---

class WaveguideConfig(StrictModel):
    height: float = Field(..., gt=0, description="Cross-section height |Sigma|")
    boundary: Literal[
        "dirichlet", "neumann", "mixed_dirichlet_top", "mixed_dirichlet_bottom"
    ] = "neumann"


class SourceConfig(StrictModel):
    shapes: List[Shape] = Field(..., min_length=1)
    amplitude: Union[float, Pair] = Field(default=1.0, description="f0 as a real or [re, im]")
    theta: float = Field(default=0.0, ge=0, lt=2 * math.pi)
    strict: bool = True
    quadrature_cell: Optional[float] = Field(default=None, gt=0)


class PointConfig(StrictModel):
    a: float = Field(..., gt=0)
    xperp: float = Field(..., gt=0)


class MeasurementSection(StrictModel):
    a: float = Field(..., gt=0, description="Range offset, x*_1 = -a")
    xperp_star: float = Field(..., gt=0)
    sides: List[Literal["left", "right"]] = Field(default_factory=lambda: ["left"], min_length=1)


class BlockConfig(StrictModel):
    x1: float
    transmitter: PointConfig
    receiver: PointConfig


class GridConfig(StrictModel):
    n: int = Field(..., ge=2)
    k_minus: float = Field(default=0.0, ge=0)
    k_plus: Optional[float] = Field(default=None, gt=0)
    vertex: bool = False
    alpha: Optional[float] = Field(default=None, ge=2)
    tau: float = 0.0


class NoiseConfig(StrictModel):
    delta: float = Field(default=settings.default_noise, ge=0)
    seed: int = 0


class ImagingConfig(StrictModel):
    epsilon: float = Field(default=settings.default_epsilon, gt=0)
    rho: float = Field(default=settings.default_rho, ge=0, lt=1)
    z1_min: float = -2.0
    z1_max: float = 2.0
    n1: int = Field(default=201, ge=2)
    nperp: int = Field(default=8, ge=2)
    indicators: List[Literal["fm", "fbsm"]] = Field(default_factory=lambda: ["fm", "fbsm"], min_length=1)
    true_support: Optional[Pair] = None
    support_tol: Optional[float] = Field(default=None, ge=0)


class VerifyConfig(StrictModel):
    mismatch_theta: bool = False
    refinements: int = Field(default=1, ge=0, le=4)
    alpha_candidates: List[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0])


class PsfConfig(StrictModel):
    height: float = Field(default=math.pi, gt=0)
    boundary: Literal[
        "dirichlet", "neumann", "mixed_dirichlet_top", "mixed_dirichlet_bottom"
    ] = "dirichlet"
    k_minus: float = 0.0
    k_plus: float = math.sqrt(3.0)
    y: Pair = (0.0, math.pi / 2)
    z1_min: float = -5 * math.pi
    z1_max: float = 5 * math.pi
    n: int = Field(default=2001, ge=3)


class OutputConfig(StrictModel):
    directory: Optional[str] = None
    formats: List[Literal["csv", "pgm"]] = Field(default_factory=lambda: ["csv", "pgm"])


class RunConfig(StrictModel):
    """Top-level run file."""
    schema_version: Literal[1]
    name: str = "run"
    waveguide: WaveguideConfig
    source: Optional[SourceConfig] = None
    block: Optional[BlockConfig] = None
    measurement: Optional[MeasurementSection] = None
    grid: GridConfig
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    imaging: ImagingConfig = Field(default_factory=ImagingConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    psf: PsfConfig = Field(default_factory=PsfConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def check_physics(self) -> "RunConfig":
        from .build import check_config

        if (self.source is None) == (self.block is None):
            raise PhysicsError("Exactly one of 'source' and 'block' must be given", "waveguide")
        if self.source is not None and self.measurement is None:
            raise PhysicsError("A source run needs a 'measurement' section", "source")
        if self.block is not None and self.grid.alpha is not None:
            raise PhysicsError("Block runs do not support the alpha operator", "grid", "alpha")
        check_config(self)
        return self

    @property
    def is_block(self) -> bool:
        return self.block is not None

    def digest(self) -> str:
        """sha256 of the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _locate(text: str, loc: Tuple) -> Optional[int]:
    """Line of the deepest key of a validation location in the JSON text."""
    pos = 0
    found = None
    for part in loc:
        if not isinstance(part, str):
            continue
        needle = f'"{part}"'
        idx = text.find(needle, pos)
        while idx != -1:
            rest = text[idx + len(needle):].lstrip()
            if rest.startswith(":"):
                break
            idx = text.find(needle, idx + 1)
        if idx == -1:
            break
        pos = idx + len(needle)
        found = idx
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    """
    Validate run configuration text.

    Raises:
        ConfigError: With a path:line: prefix locating the first problem
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON: {e.msg}", path, e.lineno) from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first.get("loc", ()))
        message = first["msg"]
        cause = first.get("ctx", {}).get("error")
        if isinstance(cause, PhysicsError):
            loc = loc + cause.loc
            message = str(cause)
        where = ".".join(str(p) for p in loc) or "<root>"
        line = _locate(text, loc) if loc else 1
        raise ConfigError(f"{where}: {message}", path, line or 1) from e


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a run configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("Config file not found", str(path))
    return parse_config(path.read_text(), str(path))
