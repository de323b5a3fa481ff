"""
Background sample loading into a bounded queue.

One producer thread walks the samples in a seeded order, cuts random crops
and puts them on the queue; the training loop consumes them in order, so a
fixed seed reproduces the same stream.
"""

import logging
import queue
import threading
from typing import Iterator, Optional, Sequence

import numpy as np

from src.models.stereo_models import StereoPair, StereoSample

logger = logging.getLogger(__name__)

_DONE = object()


def random_crop(sample: StereoSample, crop_height: int, crop_width: int, rng: np.random.Generator) -> StereoSample:
    """Crop every per-pixel array of `sample` to at most crop_height×crop_width."""
    height, width = sample.pair.height, sample.pair.width
    ch, cw = min(crop_height, height), min(crop_width, width)
    top = int(rng.integers(0, height - ch + 1))
    left = int(rng.integers(0, width - cw + 1))
    window = (slice(top, top + ch), slice(left, left + cw))

    def cut(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
        return None if a is None else np.ascontiguousarray(a[window])

    return StereoSample(
        pair=StereoPair(
            left=sample.pair.left[(slice(None),) + window],
            right=sample.pair.right[(slice(None),) + window],
        ),
        gt_disparity=cut(sample.gt_disparity),
        gt_depth=cut(sample.gt_depth),
        calib=sample.calib,
        valid=cut(sample.valid),
        name=sample.name,
    )


class SampleLoader:
    def __init__(
        self,
        samples: Sequence[StereoSample],
        crop_height: int,
        crop_width: int,
        seed: int = 0,
        queue_size: int = 4,
        shuffle: bool = True,
    ):
        self.samples = list(samples)
        self.crop_height = crop_height
        self.crop_width = crop_width
        self.seed = seed
        self.queue_size = queue_size
        self.shuffle = shuffle

    def epoch(self, index: int) -> Iterator[StereoSample]:
        """Yield the crops of one epoch; the producer runs on a daemon thread."""
        items: "queue.Queue" = queue.Queue(maxsize=self.queue_size)
        stop = threading.Event()
        rng = np.random.default_rng([self.seed, index])
        order = rng.permutation(len(self.samples)) if self.shuffle else np.arange(len(self.samples))

        def produce() -> None:
            try:
                for i in order:
                    if stop.is_set():
                        return
                    items.put(random_crop(self.samples[i], self.crop_height, self.crop_width, rng))
            except BaseException as e:  # handed to the consumer
                items.put(e)
            finally:
                items.put(_DONE)

        worker = threading.Thread(target=produce, name=f"sample-loader-{index}", daemon=True)
        worker.start()
        try:
            while True:
                item = items.get()
                if item is _DONE:
                    break
                if isinstance(item, BaseException):
                    raise item
                yield item
        finally:
            stop.set()
            # unblock a producer waiting on a full queue
            while worker.is_alive():
                try:
                    items.get_nowait()
                except queue.Empty:
                    worker.join(timeout=0.01)
