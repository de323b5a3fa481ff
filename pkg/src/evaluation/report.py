"""
Per-sample evaluation reports and their JSON-lines file.

Each line is one JSON object with keys sample, mae_px, mae_mm, bad1, bad2,
bad3, d1 and n_valid. The last line has sample == "__aggregate__" and holds
n_valid-weighted means over the samples above it.
"""

from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.dataset.calibration import disparity_to_depth
from src.errors import ContractError
from src.evaluation.metrics import bad_n, d1, mae
from src.models.report_models import EvalReport
from src.models.stereo_models import StereoSample
from src.utils.atomic import write_text_atomic

AGGREGATE = "__aggregate__"
REPORT_KEYS = ["sample", "mae_px", "mae_mm", "bad1", "bad2", "bad3", "d1", "n_valid"]


def ground_truth_disparity(sample: StereoSample) -> np.ndarray:
    """The sample's disparity ground truth, derived from depth and calibration when only depth is given."""
    if sample.gt_disparity is not None:
        return sample.gt_disparity
    if sample.gt_depth is not None and sample.calib is not None:
        depth = np.asarray(sample.gt_depth, dtype=np.float64)
        out = np.zeros_like(depth)
        ok = np.isfinite(depth) & (depth > 0)
        out[ok] = sample.calib.focal_px * sample.calib.baseline_mm / depth[ok]
        return out.astype(np.float32)
    raise ContractError(f"sample {sample.name!r} has no ground truth to evaluate against")


def evaluation_mask(sample: StereoSample, gt: np.ndarray, max_disparity: float) -> np.ndarray:
    mask = np.isfinite(gt) & (gt > 0) & (gt < max_disparity)
    if sample.valid is not None:
        mask &= sample.valid
    return mask


def depth_mae(pred: np.ndarray, sample: StereoSample, gt: np.ndarray, mask: np.ndarray) -> Optional[float]:
    if sample.calib is None:
        return None
    predicted = disparity_to_depth(pred, sample.calib)
    if sample.gt_depth is not None:
        truth = np.asarray(sample.gt_depth, dtype=np.float64)
        truth_valid = np.isfinite(truth) & (truth > 0)
    else:
        depth = disparity_to_depth(gt, sample.calib)
        truth, truth_valid = depth.values, depth.valid
    both = mask & predicted.valid & truth_valid
    if not both.any():
        return None
    return mae(predicted.values, truth, both)


def evaluate_sample(pred: np.ndarray, sample: StereoSample, max_disparity: float = 192) -> EvalReport:
    gt = ground_truth_disparity(sample)
    mask = evaluation_mask(sample, gt, max_disparity)
    return EvalReport(
        sample=sample.name,
        mae_px=mae(pred, gt, mask),
        mae_mm=depth_mae(pred, sample, gt, mask),
        bad1=bad_n(pred, gt, mask, 1),
        bad2=bad_n(pred, gt, mask, 2),
        bad3=bad_n(pred, gt, mask, 3),
        d1=d1(pred, gt, mask),
        n_valid=int(mask.sum()),
    )


def aggregate_reports(reports: Sequence[EvalReport]) -> EvalReport:
    if not reports:
        raise ContractError("no reports to aggregate")
    frame = pd.DataFrame([r.model_dump() for r in reports])
    weights = frame["n_valid"].astype(float)
    total = float(weights.sum())
    if total <= 0:
        raise ContractError("aggregate over reports without valid pixels")

    def weighted(column: str) -> Optional[float]:
        values = frame[column].astype(float)
        present = values.notna()
        if not present.any():
            return None
        return float((values[present] * weights[present]).sum() / weights[present].sum())

    return EvalReport(
        sample=AGGREGATE,
        mae_px=weighted("mae_px"),
        mae_mm=weighted("mae_mm"),
        bad1=weighted("bad1"),
        bad2=weighted("bad2"),
        bad3=weighted("bad3"),
        d1=weighted("d1"),
        n_valid=int(total),
    )


def reports_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    rows: List[EvalReport] = list(reports) + [aggregate_reports(reports)]
    return pd.DataFrame([r.model_dump() for r in rows], columns=REPORT_KEYS)


def write_report(path: Union[str, Path], reports: Sequence[EvalReport]) -> str:
    text = reports_frame(reports).to_json(orient="records", lines=True)
    return write_text_atomic(path, text if text.endswith("\n") else text + "\n")
