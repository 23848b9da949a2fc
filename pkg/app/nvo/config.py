import os
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Mode = Literal["exact", "conservative"]
Method = Literal["brd", "ga", "baseline"]
Init = Literal["random", "max_scale"]

DEFAULT_PERCENTILE = 0.9
DEFAULT_BINS = 101
DEFAULT_SENSITIVITY = 1.0
DEFAULT_MULTIPLIERS: tuple[float, ...] = (3.0, 2.0, 1.0, 0.33, 0.2)
DEFAULT_JACCARD_THRESHOLD = 0.001
FORMAT_VERSION = 1


class BrdConfig(BaseModel):
    max_passes: int = Field(default=100, ge=1)
    payoff_tolerance: float = Field(default=0.0, ge=0.0)
    init: Init = "max_scale"
    seed: int = 0
    mode: Mode = "exact"
    # evaluate candidates on (scale, bin) groups instead of per-instance rows
    grouped: bool = True
    progress: bool = False

    model_config = ConfigDict(frozen=True)


class GaConfig(BaseModel):
    population: int = Field(default=500, ge=2)
    mating_parents: int = Field(default=10, ge=1)
    crossover_points: int = Field(default=2, ge=1)
    mutation_rate: float = Field(default=0.05, ge=0.0, le=1.0)
    elites: int = Field(default=5, ge=0)
    generations: int = Field(ge=0)
    seed: int = 0
    stall_generations: int = Field(default=50, ge=1)
    mode: Mode = "exact"
    workers: int = Field(default=1, ge=1)
    progress: bool = False

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_sizes(self) -> "GaConfig":
        if self.elites > self.population:
            raise ValueError(f"elites ({self.elites}) exceeds population ({self.population})")
        if self.mating_parents > self.population:
            raise ValueError(
                f"mating_parents ({self.mating_parents}) exceeds population ({self.population})"
            )
        return self


class RunConfig(BaseModel):
    input: str
    column: str
    epsilon: float
    percentile: float = DEFAULT_PERCENTILE
    bins: int = DEFAULT_BINS
    sensitivity: float = DEFAULT_SENSITIVITY
    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    method: Method = "brd"
    mode: Mode = "exact"
    seed: int = 0
    brd: BrdConfig = BrdConfig()
    ga: GaConfig | None = None
    out_dir: str = "out"
    export_dist: bool = False
    samples: int = 0
    jaccard_threshold: float = DEFAULT_JACCARD_THRESHOLD

    model_config = ConfigDict(frozen=True)

    @field_validator("epsilon")
    @classmethod
    def _positive_epsilon(cls, value: float) -> float:
        if not value > 0:
            raise ValueError(f"epsilon must be > 0, got {value}")
        return value

    @field_validator("bins")
    @classmethod
    def _enough_bins(cls, value: int) -> int:
        if value < 2:
            raise ValueError(f"bins must be >= 2, got {value}")
        return value

    @field_validator("multipliers")
    @classmethod
    def _positive_multipliers(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value or any(not m > 0 for m in value):
            raise ValueError(f"multipliers must be non-empty and all > 0, got {value}")
        return value

    @model_validator(mode="after")
    def _check_ga(self) -> "RunConfig":
        if self.method == "ga" and self.ga is None:
            raise ValueError("method 'ga' needs a GaConfig (generations is required)")
        return self


class Settings(BaseModel):
    log_level: str = "INFO"
    out_dir: str = "out"


def load_settings() -> Settings:
    """Read process-level settings from the environment and an optional .env file."""
    load_dotenv()
    return Settings(
        log_level=os.getenv("NVO_LOG_LEVEL", "INFO").upper(),
        out_dir=os.getenv("NVO_OUT_DIR", "out"),
    )
