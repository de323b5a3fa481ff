"""
Pydantic models for evaluation and benchmark reports.
"""

from typing import Optional

from pydantic import BaseModel, Field, model_validator


class EvalReport(BaseModel):
    """Per-sample (or aggregate) disparity metrics"""

    sample: str = Field("sample", description="Sample name, or __aggregate__ for the summary row")
    mae_px: float = Field(..., ge=0, description="Mean absolute disparity error in pixels")
    mae_mm: Optional[float] = Field(None, ge=0, description="Mean absolute depth error in millimetres")
    bad1: float = Field(..., ge=0, le=100, description="Percent of pixels with error > 1 px")
    bad2: float = Field(..., ge=0, le=100, description="Percent of pixels with error > 2 px")
    bad3: float = Field(..., ge=0, le=100, description="Percent of pixels with error > 3 px")
    d1: float = Field(..., ge=0, le=100, description="Percent of pixels with error > 3 px and > 5% of gt")
    n_valid: int = Field(..., ge=0, description="Number of evaluated pixels")

    @model_validator(mode="after")
    def validate_bad_order(self) -> "EvalReport":
        # small slack for float aggregation
        if self.bad1 + 1e-9 < self.bad2 or self.bad2 + 1e-9 < self.bad3:
            raise ValueError("bad-n percentages must be non-increasing in n")
        return self


class BenchReport(BaseModel):
    height: int
    width: int
    iters: int = Field(..., ge=1)
    warmup: int = Field(..., ge=0)
    mean_ms: float
    median_ms: float
    std_ms: float
    cv: float = Field(..., description="Coefficient of variation of per-iteration time")
    parameter_count: int
    gflops: float = Field(..., description="Analytic GFLOPs per forward pass")
    mca_enabled: bool = True
    hfdo_enabled: bool = True
