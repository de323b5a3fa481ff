"""
Dataset manifests: one sample per line, tab-separated

    left<TAB>right[<TAB>gt[<TAB>calib]]

Relative paths resolve against the manifest's directory. Blank lines and
lines starting with `#` are ignored.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd

from src.dataset.calibration import read_calibration
from src.dataset.images import read_image
from src.dataset.pfm import read_pfm
from src.errors import FormatError
from src.models.stereo_models import StereoPair, StereoSample
from src.utils.atomic import write_text_atomic

logger = logging.getLogger(__name__)

COLUMNS = ["left", "right", "gt", "calib"]


def _cell(value) -> str:
    # short rows come back as NaN
    return value.strip() if isinstance(value, str) else ""


@dataclass
class ManifestEntry:
    left: Path
    right: Path
    gt: Optional[Path] = None
    calib: Optional[Path] = None

    @property
    def name(self) -> str:
        return self.left.stem


def read_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    manifest = Path(path)
    if not manifest.is_file():
        raise FormatError(f"manifest not found: {manifest}")
    try:
        frame = pd.read_csv(
            manifest,
            sep="\t",
            header=None,
            names=COLUMNS,
            comment="#",
            skip_blank_lines=True,
            dtype=str,
            keep_default_na=False,
        )
    except pd.errors.EmptyDataError:
        return []
    except (pd.errors.ParserError, ValueError) as e:
        raise FormatError(f"{manifest}: malformed manifest: {e}") from e

    base = manifest.parent
    entries = []
    for row in frame.itertuples(index=False):
        left, right = _cell(row.left), _cell(row.right)
        if not left and not right:
            continue
        if not left or not right:
            raise FormatError(f"{manifest}: every line needs at least left and right paths")
        gt, calib = _cell(row.gt), _cell(row.calib)
        entries.append(
            ManifestEntry(
                left=base / left,
                right=base / right,
                gt=base / gt if gt else None,
                calib=base / calib if calib else None,
            )
        )
    logger.info(f"Read {len(entries)} samples from {manifest}")
    return entries


def load_sample(entry: ManifestEntry) -> StereoSample:
    pair = StereoPair(left=read_image(entry.left), right=read_image(entry.right))
    gt = read_pfm(entry.gt) if entry.gt is not None else None
    if gt is not None and gt.shape != (pair.height, pair.width):
        raise FormatError(f"{entry.gt}: ground truth {gt.shape} does not match images {pair.left.shape[1:]}")
    calib = read_calibration(entry.calib) if entry.calib is not None else None
    return StereoSample(pair=pair, gt_disparity=gt, calib=calib, name=entry.name)


def load_manifest(path: Union[str, Path]) -> List[StereoSample]:
    return [load_sample(entry) for entry in read_manifest(path)]


def write_manifest(path: Union[str, Path], rows: Sequence[Sequence[str]]) -> str:
    """Write rows of (left, right[, gt[, calib]]) paths, relative to the manifest directory."""
    lines = ["\t".join(str(part) for part in row if part) for row in rows]
    return write_text_atomic(path, "\n".join(lines) + "\n")
