"""
Toy-scale training with Adam over the three-stage loss.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd

from src.errors import ContractError, EmptyMaskError
from src.models.run_config import RunConfig
from src.models.stereo_models import StereoSample
from src.network.pipeline import RRESMNet
from src.numerics.optim import Adam
from src.training.loader import SampleLoader
from src.training.loss import LossWeights, Supervision, total_loss
from src.utils.atomic import write_text_atomic

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["step", "epoch", "total", "loss_f", "loss_cg", "loss_dr"]


@dataclass
class TrainResult:
    curve: pd.DataFrame
    steps: int
    skipped: int


class Trainer:
    def __init__(self, model: RRESMNet, cfg: RunConfig):
        self.model = model
        self.cfg = cfg
        t = cfg.train
        self.weights = LossWeights(w1=t.w1, w2=t.w2, w3=t.w3)
        self.optimizer = Adam(model.parameters(), lr=t.lr, beta1=t.beta1, beta2=t.beta2, eps=t.eps)

    def _accumulate(self, sample: StereoSample, scale: float) -> Dict[str, float]:
        supervision = Supervision.from_sample(sample, self.cfg.model.max_disparity)
        if not supervision.valid_mask.any():
            raise EmptyMaskError(f"crop of {sample.name!r} has no valid ground truth")
        output = self.model(sample.pair.left, sample.pair.right)
        loss, stages = total_loss(output, supervision, self.weights)
        (loss * scale).backward()
        stages["total"] = loss.item()
        return stages

    def train(self, samples: Sequence[StereoSample]) -> TrainResult:
        if not samples:
            raise ContractError("cannot train on an empty manifest")
        t = self.cfg.train
        loader = SampleLoader(samples, t.crop_height, t.crop_width, seed=t.seed, queue_size=t.queue_size)
        target_steps = t.steps
        records: List[Dict[str, float]] = []
        skipped = 0
        step = 0
        epoch = 0
        while (target_steps is None and epoch < t.epochs) or (target_steps is not None and step < target_steps):
            steps_before = step
            batch: List[StereoSample] = []
            for crop in loader.epoch(epoch):
                batch.append(crop)
                if len(batch) == t.batch_size:
                    skipped += self._step(batch, step, epoch, records)
                    step = len(records)
                    batch = []
                    if target_steps is not None and step >= target_steps:
                        break
            if batch and (target_steps is None or step < target_steps):
                skipped += self._step(batch, step, epoch, records)
                step = len(records)
            if step == steps_before:
                raise ContractError("no sample in the manifest has usable ground truth")
            epoch += 1
        curve = pd.DataFrame.from_records(records, columns=CURVE_COLUMNS)
        logger.info(f"Finished training: {step} steps, {skipped} crops skipped")
        return TrainResult(curve=curve, steps=step, skipped=skipped)

    def _step(self, batch: List[StereoSample], step: int, epoch: int, records: List[Dict[str, float]]) -> int:
        """One optimizer step over `batch`; returns the number of skipped crops."""
        self.model.zero_grad()
        sums = {"total": 0.0, "loss_f": 0.0, "loss_cg": 0.0, "loss_dr": 0.0}
        used = 0
        skipped = 0
        for sample in batch:
            try:
                stages = self._accumulate(sample, 1.0 / len(batch))
            except EmptyMaskError as e:
                logger.warning(f"Skipping sample: {e}")
                skipped += 1
                continue
            used += 1
            for key in sums:
                sums[key] += stages[key]
        if used == 0:
            return skipped
        if used != len(batch):
            # gradients were accumulated with 1/len(batch); rescale to the crops actually used
            for p in self.optimizer.params:
                p.grad *= len(batch) / used
        self.optimizer.step()
        record = {"step": step, "epoch": epoch, **{k: v / used for k, v in sums.items()}}
        records.append(record)
        logger.info(
            f"step {step}: total={record['total']:.4f} f={record['loss_f']:.4f} "
            f"cg={record['loss_cg']:.4f} dr={record['loss_dr']:.4f}"
        )
        return skipped


def write_loss_curve(curve: pd.DataFrame, path: Union[str, Path]) -> str:
    return write_text_atomic(path, curve.to_csv(sep="\t", index=False, float_format="%.6g"))


def train_model(model: RRESMNet, cfg: RunConfig, samples: Sequence[StereoSample], curve_path: Optional[str] = None):
    result = Trainer(model, cfg).train(samples)
    if curve_path is not None:
        write_loss_curve(result.curve, curve_path)
    return result
