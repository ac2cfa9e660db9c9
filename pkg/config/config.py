from typing import Optional, Literal, Any
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import BaseModel, Field, field_validator, model_validator

from utils.logger import LOGGER
from utils import load_yaml, load_key_value_file

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yml"

METHODS = ("local-spectral", "mqi", "global-spectral", "dendrogram")


class EnvironmentSettings(BaseSettings):
    model_config = SettingsConfigDict(env_file=(".env.prod", ".env.local"), extra="ignore")

    ENV: Literal["DEV", "PROD"] = "DEV"
    NCP_LOG_FILE: Optional[str] = None
    NCP_WORKERS: int = Field(default=1, ge=1)

    @classmethod
    def load(cls) -> "EnvironmentSettings":
        return cls()


class LocalSpectralSettings(BaseModel):
    alphas: list[float] = Field(default_factory=lambda: [0.01, 0.05, 0.1, 0.2, 0.5])
    # None means powers of ten up to half the graph volume
    target_volumes: Optional[list[int]] = None
    seed_all_limit: int = Field(default=10_000, ge=1)
    seed_sample_size: int = Field(default=1000, ge=1)
    max_cluster_size: Optional[int] = Field(default=None, ge=1)

    @field_validator("alphas")
    @classmethod
    def check_alphas(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("alpha grid must not be empty")
        for alpha in values:
            if not 0.0 < alpha < 1.0:
                raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        return values

    @field_validator("target_volumes")
    @classmethod
    def check_targets(cls, values: Optional[list[int]]) -> Optional[list[int]]:
        if values is not None and (not values or min(values) < 1):
            raise ValueError("target volumes must be a non-empty list of positive integers")
        return values


class FlowSettings(BaseModel):
    trials: int = Field(default=200, ge=1)
    tolerance: float = Field(default=0.02, ge=0.0, lt=1.0)
    coarsest_size: int = Field(default=64, ge=2)
    min_recursion_size: int = Field(default=20, ge=2)
    refinement_passes: int = Field(default=4, ge=0)


class DendrogramSettings(BaseModel):
    full_run_limit: int = Field(default=2000, ge=1)
    capped_removals: int = Field(default=2000, ge=0)


class BoundsSettings(BaseModel):
    rank_cap: int = Field(default=32, ge=2)
    iterations: int = Field(default=5000, ge=1)
    tolerance: float = Field(default=1e-8, gt=0.0)
    dense_limit: int = Field(default=200, ge=2)
    dense_dual_limit: int = Field(default=2000, ge=2)
    multiplier_stages: int = Field(default=20, ge=1)
    gap_tolerance: float = Field(default=1e-3, gt=0.0)


class ScoringSettings(BaseModel):
    sample_pairs: int = Field(default=2000, ge=1)


class NcpSettings(BaseModel):
    exact_oracle_limit: int = Field(default=18, ge=1, le=24)
    internal_exact_limit: int = Field(default=18, ge=2, le=24)


class ApplicationSettings(BaseModel):
    local_spectral: LocalSpectralSettings = Field(default_factory=LocalSpectralSettings)
    flow: FlowSettings = Field(default_factory=FlowSettings)
    dendrogram: DendrogramSettings = Field(default_factory=DendrogramSettings)
    bounds: BoundsSettings = Field(default_factory=BoundsSettings)
    scoring: ScoringSettings = Field(default_factory=ScoringSettings)
    ncp: NcpSettings = Field(default_factory=NcpSettings)

    @classmethod
    def from_cfg(cls, cfg: str | Path | dict | None = None) -> "ApplicationSettings":
        if cfg is None:
            cfg = DEFAULT_CONFIG_PATH
        if isinstance(cfg, (str, Path)):
            cfg = load_yaml(cfg)
        return cls(**cfg)


class RunConfig(BaseModel):
    """Everything needed to repeat a run. Persisted next to its outputs."""

    graph: str
    methods: list[str] = Field(default_factory=lambda: list(METHODS))
    samples: Optional[int] = Field(default=None, ge=1)
    seed: int = 42
    scores: list[str] = Field(default_factory=lambda: ["Conductance"])
    out: str = "ncp-out"
    exact: bool = False
    sdp: bool = False
    keep_lcc: bool = False
    connected_only: bool = False
    allow_disconnected: bool = False
    bias: bool = True
    workers: int = Field(default=1, ge=1)
    settings: ApplicationSettings = Field(default_factory=ApplicationSettings.from_cfg)

    @field_validator("methods", "scores", mode="before")
    @classmethod
    def split_lists(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("methods")
    @classmethod
    def check_methods(cls, values: list[str]) -> list[str]:
        if not values:
            raise ValueError("at least one method is required")
        unknown = [name for name in values if name not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
        return values

    @model_validator(mode="after")
    def apply_samples(self) -> "RunConfig":
        # one knob scales both sampled families
        if self.samples is not None:
            self.settings = self.settings.model_copy(deep=True)
            self.settings.local_spectral.seed_sample_size = self.samples
            self.settings.flow.trials = self.samples
        return self

    @property
    def exact_oracle_limit(self) -> int:
        return self.settings.ncp.exact_oracle_limit

    @classmethod
    def from_sources(
        cls,
        config_file: str | Path | None = None,
        overrides: dict[str, Any] | None = None,
        settings_file: str | Path | None = None,
    ) -> "RunConfig":
        """
        Merge a ``key = value`` run file with explicit overrides (flags win).

        Args:
            config_file: Optional run file mirroring the CLI flags.
            overrides: Values given on the command line; ``None`` entries are ignored.
            settings_file: Optional YAML with algorithm defaults.

        Returns:
            RunConfig: The validated run configuration.
        """
        values: dict[str, Any] = {}
        if config_file is not None:
            if Path(config_file).suffix in (".yml", ".yaml"):
                values.update(load_yaml(config_file))
            else:
                values.update(load_key_value_file(config_file))
            LOGGER.debug(f"Loaded run file {config_file}")
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        values.setdefault("settings", ApplicationSettings.from_cfg(settings_file))
        return cls(**values)
