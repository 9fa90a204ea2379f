"""
Configuration Management Module

Environment settings (prefix CORONA_, .env honoured), the params.yaml
defaults per command and the validated run configuration that ends up in
every manifest. Precedence: CLI flags over params.yaml over model defaults.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.errors import UsageError

logger = logging.getLogger(__name__)

COMMANDS = ("gen-domain", "whitney", "cubes", "corona", "carleson", "eps-approx", "augment", "dichotomy")


class Settings(BaseSettings):
    """
    Process-level settings read from CORONA_* environment variables.

    Example:
        >>> Settings(OUTPUT_DIR="out").OUTPUT_DIR
        PosixPath('out')
    """

    model_config = SettingsConfigDict(env_prefix="CORONA_", extra="ignore")

    OUTPUT_DIR: Path = Path("artifacts")
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: Literal["json", "text"] = "text"
    WORKERS: int = Field(default=1, ge=1)
    PARAMS_FILE: Path = Path("params.yaml")


def get_settings() -> Settings:
    """Settings after loading a .env file from the working directory."""
    load_dotenv()
    return Settings()


class RunParams(BaseModel):
    """Numeric parameters shared by all commands; ranges are enforced here."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(ge=0)
    N: int = Field(default=8, ge=1, le=12)
    eta: float = Field(default=0.0625, gt=0.0, lt=1.0)
    eps: float = Field(default=0.1, gt=0.0, lt=0.5)
    delta: float = Field(default=0.02, ge=0.0)
    A: float = Field(default=4.0, gt=0.0)
    depth: int = Field(default=4, ge=0)
    jmax: int = Field(default=1, ge=1)
    kmax: int = Field(default=3, ge=1)
    budget: int = Field(default=4096, ge=1)
    shell: Optional[float] = Field(default=None, gt=0.0)
    min_side: float = Field(default=2.0**-10, gt=0.0)
    corkscrew_samples: int = Field(default=2000, ge=1)
    cap_count: int = Field(default=2, ge=1)
    aug_depth: int = Field(default=2, ge=1, le=3)
    radius: float = Field(default=1.0, gt=0.0)
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    trials: int = Field(default=1000, ge=1)
    levels: List[int] = Field(default_factory=lambda: [2, 3, 4, 5])
    lambdas: List[float] = Field(default_factory=lambda: [0.2, 0.3])
    formula: str = "halfplane-angle"
    compare_corona: bool = False

    @field_validator("center")
    @classmethod
    def _planar(cls, v: List[float]) -> List[float]:
        if len(v) != 2:
            raise ValueError("center must have two coordinates")
        return v

    @field_validator("lambdas")
    @classmethod
    def _cantor_ratios(cls, v: List[float]) -> List[float]:
        if any(not 0.0 < lam < 0.5 for lam in v):
            raise ValueError("Cantor ratios must lie in (0, 1/2)")
        return v

    @model_validator(mode="after")
    def _delta_below_eps(self) -> "RunParams":
        if self.delta >= self.eps / 3.0:
            raise ValueError("delta must be below eps/3")
        return self


class RunConfig(BaseModel):
    """Resolved configuration of one CLI run."""

    model_config = ConfigDict(extra="forbid")

    command: Literal[COMMANDS]  # type: ignore[valid-type]
    domain: Dict[str, Any] = Field(default_factory=lambda: {"kind": "halfplane"})
    params: RunParams
    output_dir: Path
    workers: int = Field(default=1, ge=1)

    def to_dict(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json")
        data["output_dir"] = str(self.output_dir)
        return data


def load_params(path: Path) -> Dict[str, Any]:
    """Read params.yaml; a missing file means no overrides."""
    if not Path(path).exists():
        logger.debug(f"No params file at {path}")
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise UsageError("params file must hold a mapping", path=str(path))
    return data


def resolve_config(
    command: str,
    domain: Optional[Dict[str, Any]],
    overrides: Dict[str, Any],
    settings: Settings,
    output_dir: Optional[Path] = None,
) -> RunConfig:
    """Merge params.yaml (defaults, then the command section) with CLI overrides.

    Raises:
        UsageError: Any value outside its documented range
    """
    params = load_params(settings.PARAMS_FILE)
    merged: Dict[str, Any] = dict(params.get("defaults", {}))
    merged.update(params.get(command, {}))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    spec = domain if domain is not None else merged.pop("domain", None)
    merged.pop("domain", None)
    try:
        return RunConfig(
            command=command,
            domain=spec or {"kind": "halfplane"},
            params=RunParams(**merged),
            output_dir=output_dir or settings.OUTPUT_DIR,
            workers=settings.WORKERS,
        )
    except ValidationError as exc:
        errors = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise UsageError("invalid configuration", errors=errors) from exc
