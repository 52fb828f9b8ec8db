"""
Pipeline configuration — environment defaults plus the JSON config schema.

Environment (.env at the project root):
    AUCTION_LAB_OUT_DIR     default output directory         (out)
    AUCTION_LAB_LOG_LEVEL   logging level for the scripts    (INFO)
    AUCTION_LAB_CONFIG      default pipeline config          (configs/default.json)

Usage:
    from settings import load_config

    config = load_config(Path("configs/default.json"))
"""

import logging
import os
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator

from econometrics import COUNT_TERMS, PRICE_TERMS, Response, Term, Weighting
from equilibrium import ValueDistribution
from simulation import SimConfig

# ── Environment ──────────────────────────────────────────────────
PROJECT_ROOT = Path(__file__).resolve().parent.parent
load_dotenv(PROJECT_ROOT / ".env")

OUT_DIR = os.getenv("AUCTION_LAB_OUT_DIR", "out")
LOG_LEVEL = os.getenv("AUCTION_LAB_LOG_LEVEL", "INFO")
CONFIG_PATH = os.getenv("AUCTION_LAB_CONFIG", "configs/default.json")

logger = logging.getLogger(__name__)


def resolve_path(path: Path | str) -> Path:
    path = Path(path)
    return path if path.is_absolute() else PROJECT_ROOT / path


def _creatable(path: Path) -> bool:
    probe = path
    while not probe.exists():
        if probe.parent == probe:
            return False
        probe = probe.parent
    return probe.is_dir() and os.access(probe, os.W_OK)


# ── Models ───────────────────────────────────────────────────────
class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class PathsConfig(_Section):
    model_config = ConfigDict(frozen=True, extra="forbid", validate_default=True)

    out_dir: Path = Path(OUT_DIR)
    wholesale_csv: Path | None = None
    usda_prices_csv: Path | None = None

    @field_validator("out_dir")
    @classmethod
    def _out_dir_creatable(cls, value: Path) -> Path:
        value = resolve_path(value)
        if value.exists() and not value.is_dir():
            raise ValueError(f"output path {value} exists and is not a directory")
        if not _creatable(value):
            raise ValueError(f"output directory {value} cannot be created")
        return value

    @field_validator("wholesale_csv", "usda_prices_csv")
    @classmethod
    def _input_exists(cls, value: Path | None) -> Path | None:
        if value is None:
            return None
        value = resolve_path(value)
        if not value.is_file():
            raise ValueError(f"input file {value} does not exist")
        return value


class EquilibriumConfig(_Section):
    F1: ValueDistribution = ValueDistribution.uniform(0.0, 1.0)
    F2: ValueDistribution = ValueDistribution.uniform(0.0, 1.0)
    M: PositiveInt = 1
    alphas: tuple[float, ...] = (0.0, 0.5, 1.0)
    grid_size: PositiveInt = 2001
    verify_quantiles: PositiveInt = 20

    @field_validator("alphas")
    @classmethod
    def _alphas_in_range(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if any(not 0.0 <= a <= 1.0 for a in value):
            raise ValueError("alphas must lie in [0, 1]")
        return value


class RegressionConfig(_Section):
    responses: tuple[Response, ...] = (Response.N_BIDDERS, Response.LOG_OFFER, Response.LOG_WIN)
    weightings: tuple[Weighting, ...] = (Weighting.QUANTITY, Weighting.PRODUCT_EQUALIZED)
    count_terms: tuple[Term, ...] = COUNT_TERMS
    price_terms: tuple[Term, ...] = PRICE_TERMS
    flavor: Literal["HC0", "HC1"] = "HC1"


class OutputConfig(_Section):
    formats: tuple[Literal["csv", "text"], ...] = ("csv", "text")


class PipelineConfig(_Section):
    schema_version: Literal[1] = Field(description="must be 1")
    paths: PathsConfig = Field(default_factory=PathsConfig)
    simulation: SimConfig
    equilibrium: EquilibriumConfig = EquilibriumConfig()
    regression: RegressionConfig = RegressionConfig()
    output: OutputConfig = OutputConfig()


def load_config(path: Path | str | None = None) -> PipelineConfig:
    path = resolve_path(path or CONFIG_PATH)
    config = PipelineConfig.model_validate_json(path.read_text(encoding="utf-8"))
    logger.info("Loaded config %s (seed %d)", path, config.simulation.seed)
    return config


def with_overrides(
    config: PipelineConfig,
    seed: int | None = None,
    out_dir: Path | None = None,
    formats: list[str] | None = None,
) -> PipelineConfig:
    """Apply command-line overrides and re-validate."""
    data = config.model_dump()
    if seed is not None:
        data["simulation"]["seed"] = seed
    if out_dir is not None:
        data["paths"]["out_dir"] = out_dir
    if formats:
        data["output"]["formats"] = tuple(formats)
    return PipelineConfig.model_validate(data)
