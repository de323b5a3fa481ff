"""
Pydantic models for run configuration (model hyperparameters, training, paths).
"""

from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import CHECKPOINT_FILE, CHECKPOINT_NAME, OUTPUT_DIR
from src.errors import CheckpointError, ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class MCAConfig(_Strict):
    """Coordinate-attention block placed in front of the aggregation network"""

    enabled: bool = Field(True, description="Apply the attention block at all")
    unit_attention: bool = Field(False, description="Force the re-weighting maps to all-ones (ablation)")
    pooling: Literal["mean", "max"] = Field("mean", description="Plane pooling operator")
    state_dim: int = Field(16, ge=1, description="State size N of the selective scan")
    head_dim: int = Field(8, ge=1, description="Channels per scan head")
    share_direction_params: bool = Field(True, description="Use one parameter set for both scan directions")


class HFDOConfig(_Strict):
    """High-frequency refinement settings"""

    enabled: bool = Field(True, description="Disable to use relu(d_cg) as the final disparity")
    omega: float = Field(0.5, ge=0.0, le=1.0, description="Attenuation applied to the LL band")
    context: Literal["linear", "conv3"] = Field("linear", description="Context projection operator")
    context_channels: int = Field(16, ge=1, description="Channels of the projected context feature")
    prelu_slope: float = Field(0.25, description="Initial slope of the residual head PReLU")


class ModelConfig(_Strict):
    feature_channels: int = Field(32, ge=1, description="Matching feature channels C")
    groups: int = Field(16, ge=1, description="Correlation groups g_n")
    max_disparity: int = Field(192, ge=4, description="Full-resolution disparity range")
    init_seed: int = Field(0, description="Seed for weight initialisation")
    mca: MCAConfig = Field(default_factory=MCAConfig)
    hfdo: HFDOConfig = Field(default_factory=HFDOConfig)

    @field_validator("max_disparity")
    @classmethod
    def validate_max_disparity(cls, v: int) -> int:
        if v % 4 != 0:
            raise ValueError("max_disparity must be a multiple of 4")
        return v

    @model_validator(mode="after")
    def validate_grouping(self) -> "ModelConfig":
        if self.feature_channels % self.groups != 0:
            raise ValueError(
                f"feature_channels ({self.feature_channels}) must be divisible by groups ({self.groups})"
            )
        if self.groups % self.mca.head_dim != 0:
            raise ValueError(f"groups ({self.groups}) must be divisible by mca.head_dim ({self.mca.head_dim})")
        return self

    @property
    def disparity_bins(self) -> int:
        return self.max_disparity // 4


class TrainConfig(_Strict):
    lr: float = Field(1e-4, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    epochs: int = Field(1, ge=1)
    steps: Optional[int] = Field(None, ge=1, description="Stop after this many optimizer steps")
    batch_size: int = Field(1, ge=1)
    crop_height: int = Field(256, ge=16)
    crop_width: int = Field(512, ge=16)
    seed: int = 0
    w1: float = Field(1.0 / 3.0, ge=0.0, description="Weight of the pre-aggregation loss")
    w2: float = Field(1.0 / 3.0, ge=0.0, description="Weight of the aggregated loss")
    w3: float = Field(1.0 / 3.0, ge=0.0, description="Weight of the refined loss")
    queue_size: int = Field(4, ge=1)

    @field_validator("crop_height", "crop_width")
    @classmethod
    def validate_crop(cls, v: int) -> int:
        if v % 16 != 0:
            raise ValueError("crop extents must be divisible by 16")
        return v


class PathsConfig(_Strict):
    checkpoint: str = Field(..., description="Defaults to RRESM_CHECKPOINT, else <output_dir>/rresm.ckpt")
    manifest: Optional[str] = None
    output_dir: str = OUTPUT_DIR

    @model_validator(mode="before")
    @classmethod
    def default_checkpoint(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("checkpoint") is None:
            output_dir = data.get("output_dir") or OUTPUT_DIR
            data = {**data, "checkpoint": CHECKPOINT_FILE or str(Path(output_dir) / CHECKPOINT_NAME)}
        return data


class RunConfig(_Strict):
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)


def canonical_key(key: str) -> str:
    """Expand shorthand keys (`mca.pooling`, `lr`, `checkpoint`) to their full dotted path."""
    head = key.split(".", 1)[0]
    for section, model in (("model", ModelConfig), ("train", TrainConfig), ("paths", PathsConfig)):
        if head in model.model_fields:
            return f"{section}.{key}"
    return key


def _nest(flat: Mapping[str, Any]) -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    for key, value in flat.items():
        parts = canonical_key(key).split(".")
        node = tree
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"config key {key!r} conflicts with scalar key {part!r}")
            node = child
        node[parts[-1]] = value
    return tree


def _merge(base: Dict[str, Any], extra: Mapping[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse flat `dotted.key = value` lines; blank lines and `#` comments are skipped."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value
    return values


def build_run_config(flat: Optional[Mapping[str, Any]] = None, base: Optional[RunConfig] = None) -> RunConfig:
    """Validate flat dotted overrides on top of `base` (or the defaults)."""
    start = base.model_dump() if base is not None else {}
    try:
        return RunConfig.model_validate(_merge(start, _nest(flat or {})))
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_run_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """File values override defaults; `overrides` (from CLI flags) override file values."""
    flat: Dict[str, Any] = {}
    if path is not None:
        try:
            flat.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_run_config(flat)


def model_config_from_meta(meta: Mapping[str, Any]) -> Optional[ModelConfig]:
    if "model" not in meta:
        return None
    try:
        return ModelConfig.model_validate(meta["model"])
    except ValidationError as e:
        raise CheckpointError(f"checkpoint carries an invalid model config: {e}") from e
