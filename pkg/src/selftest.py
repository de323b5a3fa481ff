"""
Release gate: oracle and invariant checks over every stage of the pipeline.

Each check returns (passed, detail). `run_selftest` runs them all and
returns a pandas table with one row per check.
"""

import itertools
import logging
import tempfile
import time
from pathlib import Path
from typing import Callable, Dict, Tuple

import numpy as np
import pandas as pd

from src.bench import forward_flops
from src.dataset.pfm import read_pfm, write_pfm
from src.dataset.synthetic import gen_rds, two_plane_pattern
from src.evaluation.metrics import bad_n, d1, mae
from src.models.run_config import HFDOConfig, MCAConfig, ModelConfig, RunConfig, TrainConfig
from src.models.stereo_models import StereoOutput
from src.network.aggregation import AggregationNet, aggregate, bilinear_matrix, soft_argmax, upsample_disparity
from src.network.cost_volume import build_gwc
from src.network.hfdo import HAAR_KERNELS, HFDO, haar_dwt, haar_iwt
from src.network.mca import MCA, axis_pool, split_apply
from src.network.pipeline import build_model
from src.numerics import functional as F
from src.numerics.conv import conv2d, conv3d, conv_transpose2d
from src.numerics.gradcheck import gradcheck
from src.numerics.module import Parameter
from src.numerics.optim import adam_step
from src.numerics.scan import selective_scan
from src.training.loss import Supervision, total_loss
from src.training.trainer import Trainer

logger = logging.getLogger(__name__)

CheckResult = Tuple[bool, str]

SMOKE_MODEL = ModelConfig(
    feature_channels=16,
    groups=8,
    max_disparity=16,
    mca=MCAConfig(state_dim=4),
    hfdo=HFDOConfig(context_channels=4),
)


def _conv2d_loop(x, w, stride, pad):
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - kh) // stride + 1, (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((o, ho, wo))
    for oc, i, j in itertools.product(range(o), range(ho), range(wo)):
        out[oc, i, j] = np.sum(w[oc] * xp[:, i * stride : i * stride + kh, j * stride : j * stride + kw])
    return out


def _conv3d_loop(x, w, stride, pad):
    c, d, h, wd = x.shape
    o, _, kd, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (pad, pad)))
    do, ho, wo = ((n + 2 * pad - k) // stride + 1 for n, k in ((d, kd), (h, kh), (wd, kw)))
    out = np.zeros((o, do, ho, wo))
    for oc, z, i, j in itertools.product(range(o), range(do), range(ho), range(wo)):
        window = xp[:, z * stride : z * stride + kd, i * stride : i * stride + kh, j * stride : j * stride + kw]
        out[oc, z, i, j] = np.sum(w[oc] * window)
    return out


def _haar_loop(x):
    c, h, w = x.shape
    out = np.zeros((4, c, h // 2, w // 2))
    for ch, i, j in itertools.product(range(c), range(h // 2), range(w // 2)):
        a, b = x[ch, 2 * i, 2 * j], x[ch, 2 * i, 2 * j + 1]
        cc, d = x[ch, 2 * i + 1, 2 * j], x[ch, 2 * i + 1, 2 * j + 1]
        out[:, ch, i, j] = 0.5 * np.array([a + b + cc + d, a - b + cc - d, a + b - cc - d, a - b - cc + d])
    return out


def _worst_gradient(results) -> CheckResult:
    worst = max(results, key=lambda r: r.rel_error)
    return worst.rel_error < 1e-3, f"worst={worst.name} rel={worst.rel_error:.2e}"


def check_haar_hand_case(kernels: np.ndarray) -> CheckResult:
    bands = haar_dwt(np.array([[[1.0, 2.0], [3.0, 4.0]]]), kernels)
    got = [float(b.numpy().reshape(-1)[0]) for b in bands]
    return got == [5.0, -1.0, -2.0, 0.0], f"bands={got}"


def check_haar_reconstruction(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(1)
    worst, worst_energy = 0.0, 0.0
    for _ in range(100):
        c, h, w = rng.integers(1, 4), 2 * rng.integers(1, 6), 2 * rng.integers(1, 6)
        x = rng.standard_normal((c, h, w))
        bands = haar_dwt(x, kernels)
        back = haar_iwt(bands, kernels).numpy()
        worst = max(worst, float(np.max(np.abs(back - x))))
        energy = sum(float(np.sum(b.numpy() ** 2)) for b in bands)
        worst_energy = max(worst_energy, abs(energy - float(np.sum(x**2))) / float(np.sum(x**2)))
    return worst < 1e-5 and worst_energy < 1e-4, f"max_abs={worst:.2e} energy_rel={worst_energy:.2e}"


def check_haar_window_oracle(kernels: np.ndarray) -> CheckResult:
    x = np.random.default_rng(10).standard_normal((1, 6, 6))
    bands = haar_dwt(x, kernels)
    expected = _haar_loop(x)
    err = max(float(np.max(np.abs(band.numpy() - expected[i]))) for i, band in enumerate(bands))
    return err < 1e-12, f"max_abs={err:.2e}"


def check_conv2d_oracle(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(2)
    x, w = rng.standard_normal((3, 8, 8)), rng.standard_normal((4, 3, 3, 3))
    err = float(np.max(np.abs(conv2d(x, w, 1, 1).numpy() - _conv2d_loop(x, w, 1, 1))))
    return err < 1e-10, f"max_abs={err:.2e}"


def check_conv3d_constant(kernels: np.ndarray) -> CheckResult:
    out = conv3d(np.full((1, 4, 4, 4), 1.5), np.ones((1, 1, 2, 2, 2)), stride=2).numpy()
    return bool(np.all(out == 12.0)), f"values={np.unique(out)}"


def check_conv3d_oracle(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(11)
    x, w = rng.standard_normal((2, 5, 6, 7)), rng.standard_normal((3, 2, 3, 3, 3))
    err = max(
        float(np.max(np.abs(conv3d(x, w, stride, 1).numpy() - _conv3d_loop(x, w, stride, 1)))) for stride in (1, 2)
    )
    return err < 1e-10, f"max_abs={err:.2e}"


def check_conv_adjoint(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(3)
    x, w = rng.standard_normal((2, 7, 9)), rng.standard_normal((3, 2, 3, 3))
    y = rng.standard_normal(conv2d(x, w, 2, 1).shape)
    lhs = float(np.sum(conv2d(x, w, 2, 1).numpy() * y))
    rhs = float(np.sum(x * conv_transpose2d(y, w, 2, 1, output_size=(7, 9)).numpy()))
    rel = abs(lhs - rhs) / max(abs(lhs), 1e-12)
    return rel < 1e-5, f"rel={rel:.2e}"


def check_cost_volume_oracle(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(4)
    for _ in range(20):
        g = int(rng.integers(1, 5))
        c = g * int(rng.integers(1, 3))
        d, h, w = int(rng.integers(1, 7)), int(rng.integers(1, 9)), int(rng.integers(6, 9))
        fl, fr = rng.standard_normal((c, h, w)), rng.standard_normal((c, h, w))
        got = build_gwc(fl, fr, g, d).numpy()
        cg = c // g
        want = np.zeros((g, d, h, w))
        for gi, di, y, x in itertools.product(range(g), range(d), range(h), range(w)):
            if x - di < 0:
                continue
            acc = 0.0
            for ci in range(gi * cg, (gi + 1) * cg):
                acc += fl[ci, y, x] * fr[ci, y, x - di]
            want[gi, di, y, x] = acc / cg
        if not np.array_equal(got, want):
            return False, f"mismatch for C={c} g={g} D={d} H={h} W={w}"
    return True, "20 configurations"


def check_mca_oracles(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(5)
    pooled_ok = True
    for pooling, reduce in (("mean", np.mean), ("max", np.max)):
        vol = rng.standard_normal((2, 3, 4, 5))
        got = axis_pool(vol, pooling)
        c, d, h, w = vol.shape
        z_x = [[reduce([vol[ci, z, y, x] for z in range(d) for y in range(h)]) for x in range(w)] for ci in range(c)]
        z_y = [[reduce([vol[ci, z, y, x] for z in range(d) for x in range(w)]) for y in range(h)] for ci in range(c)]
        z_z = [[reduce([vol[ci, z, y, x] for y in range(h) for x in range(w)]) for z in range(d)] for ci in range(c)]
        for pooled, want in ((got.z_x, z_x), (got.z_y, z_y), (got.z_z, z_z)):
            pooled_ok &= bool(np.allclose(pooled.numpy(), want, rtol=0, atol=1e-12))
    vol = rng.standard_normal((2, 3, 4, 5))
    seq = rng.standard_normal((2, 5 + 4 + 3))
    got = split_apply(vol, seq).numpy()
    want = np.empty_like(vol)
    for c, z, y, x in itertools.product(range(2), range(3), range(4), range(5)):
        want[c, z, y, x] = vol[c, z, y, x] * seq[c, x] * seq[c, 5 + y] * seq[c, 9 + z]
    return pooled_ok and np.array_equal(got, want), "axis_pool (mean, max) + split_apply"


def _scan_loop(x, delta, a, b, c, d):
    length, heads, p = x.shape
    h = np.zeros((heads, p, b.shape[1]))
    out = np.zeros_like(x)
    for t in range(length):
        for k in range(heads):
            h[k] = np.exp(delta[t, k] * a[k]) * h[k] + delta[t, k] * np.outer(x[t, k], b[t])
            out[t, k] = h[k] @ c[t] + d[k] * x[t, k]
    return out


def check_scan_oracle(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(6)
    length, heads, p, n = 32, 2, 3, 4
    args = (
        rng.standard_normal((length, heads, p)),
        np.log1p(np.exp(rng.standard_normal((length, heads)))),
        -np.exp(rng.standard_normal(heads)),
        rng.standard_normal((length, n)),
        rng.standard_normal((length, n)),
        rng.standard_normal((heads, p)),
    )
    y = selective_scan(*args).numpy()
    err = float(np.max(np.abs(y - _scan_loop(*args))))
    bumped = list(args)
    bumped[0] = args[0].copy()
    bumped[0][10] += 1.0
    moved = np.abs(selective_scan(*bumped).numpy() - y).reshape(length, -1).max(axis=1)
    causal = bool(np.all(moved[:10] == 0.0) and moved[10] > 0)
    return err < 1e-5 and causal, f"max_abs={err:.2e} causal={causal}"


def check_regression(kernels: np.ndarray) -> CheckResult:
    uniform = soft_argmax(np.zeros((1, 48, 2, 3))).numpy()
    rng = np.random.default_rng(7)
    d = rng.standard_normal((3, 5))
    rows, cols = bilinear_matrix(3), bilinear_matrix(5)
    up = upsample_disparity(d.astype(np.float32)).numpy()
    want = 4.0 * (rows @ d @ cols.T)
    return bool(np.allclose(uniform, 23.5) and np.allclose(up, want, atol=1e-5)), "soft-argmax + bilinear"


def check_soft_argmax_oracle(kernels: np.ndarray) -> CheckResult:
    scores = np.random.default_rng(12).standard_normal((5, 3, 4))
    prob = np.exp(scores) / np.exp(scores).sum(axis=0)
    want = np.sum(prob * np.arange(5).reshape(5, 1, 1), axis=0)
    err = float(np.max(np.abs(soft_argmax(scores).numpy() - want)))
    return err < 1e-12, f"D=5 max_abs={err:.2e}"


def check_smooth_l1(kernels: np.ndarray) -> CheckResult:
    values = [
        F.smooth_l1(np.array([[0.5]]), np.zeros((1, 1))).item(),
        F.smooth_l1(np.array([[2.0]]), np.zeros((1, 1))).item(),
    ]
    return values == [0.125, 1.5], f"values={values}"


def check_metrics(kernels: np.ndarray) -> CheckResult:
    gt = np.array([10.0, 10.0, 10.0])
    pred = gt + np.array([0.5, 2.5, 4.0])
    mask = np.ones(3, dtype=bool)
    ok = abs(mae(np.array([1.0, 3.0]), np.zeros(2), np.ones(2, dtype=bool)) - 2.0) < 1e-12
    ok &= abs(bad_n(pred, gt, mask, 2) - 200.0 / 3.0) < 1e-9
    ok &= d1(np.array([104.0]), np.array([100.0]), np.ones(1, dtype=bool)) == 0.0
    return bool(ok), "mae / bad-n / d1 hand cases"


def check_mae_oracle(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(13)
    pred, gt = rng.uniform(0, 20, (8, 8)), rng.uniform(0, 20, (8, 8))
    mask = rng.random((8, 8)) < 0.6
    total, count = 0.0, 0
    for y, x in itertools.product(range(8), range(8)):
        if mask[y, x]:
            total += abs(pred[y, x] - gt[y, x])
            count += 1
    got = mae(pred, gt, mask)
    return abs(got - total / count) < 1e-12, f"mae={got:.6f} over {count} pixels"


def check_gradients(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(8)
    x = Parameter(rng.standard_normal((2, 5, 5)), dtype=np.float64)
    w = Parameter(rng.standard_normal((3, 2, 3, 3)), dtype=np.float64)
    results = gradcheck(lambda: F.sum(F.sigmoid(conv2d(x, w, 2, 1))), [x, w], ["x", "w"])
    worst = max(r.rel_error for r in results)
    return worst < 1e-3, f"worst_rel={worst:.2e}"


def check_mca_gradients(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(14)
    mca = MCA(4, MCAConfig(state_dim=3, head_dim=2), rng=rng)
    vol, weights = rng.standard_normal((4, 2, 3, 3)), rng.standard_normal((4, 2, 3, 3))
    names = [name for name, _ in mca.named_parameters()]
    return _worst_gradient(gradcheck(lambda: F.sum(mca(vol) * weights), mca.parameters(), names))


def check_aggregation_gradients(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(15)
    net = AggregationNet(2, MCAConfig(state_dim=2, head_dim=2), channels=(2, 2, 2), rng=rng)
    volume, weights = rng.standard_normal((2, 4, 4, 4)), rng.standard_normal((4, 4))
    names = [name for name, _ in net.named_parameters()]
    results = gradcheck(lambda: F.sum(soft_argmax(aggregate(volume, net)) * weights), net.parameters(), names, h=1e-5)
    return _worst_gradient(results)


def check_hfdo_gradients(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(16)
    module = HFDO(4, HFDOConfig(context_channels=2, context="conv3"), rng=rng)
    module.head.conv.weight.assign(rng.normal(0.0, 0.3, size=module.head.conv.weight.shape))
    context, weights = rng.standard_normal((4, 4, 6)), rng.standard_normal((16, 24))
    disparity = np.full((16, 24), 10.0)
    names = [name for name, _ in module.named_parameters()]
    results = gradcheck(
        lambda: F.sum(module(context, disparity, kernels) * weights), module.parameters(), names, h=1e-5
    )
    return _worst_gradient(results)


def check_loss_gradients(kernels: np.ndarray) -> CheckResult:
    rng = np.random.default_rng(17)
    gt = rng.uniform(0.0, 30.0, (6, 8))
    mask = rng.random((6, 8)) < 0.7
    stages = []
    for _ in range(3):
        # residuals stay clear of the |x| = 1 kink
        size = np.where(rng.random(gt.shape) < 0.5, rng.uniform(0.1, 0.7, gt.shape), rng.uniform(1.3, 3.0, gt.shape))
        stages.append(Parameter(gt + np.sign(rng.standard_normal(gt.shape)) * size, dtype=np.float64))
    supervision = Supervision(gt_disparity=gt, valid_mask=mask)
    results = gradcheck(lambda: total_loss(StereoOutput(*stages), supervision)[0], stages, ["d_f", "d_cg", "d_dr"])
    return _worst_gradient(results)


def check_flop_scaling(kernels: np.ndarray) -> CheckResult:
    model = build_model(SMOKE_MODEL)
    rng = np.random.default_rng(18)
    small = forward_flops(model, *rng.random((2, 3, 32, 64), dtype=np.float32))
    large = forward_flops(model, *rng.random((2, 3, 64, 128), dtype=np.float32))
    ratio = large / small
    return 3.0 < ratio < 5.0, f"ratio={ratio:.3f}"


def check_training_smoke(kernels: np.ndarray) -> CheckResult:
    cfg = RunConfig(
        model=SMOKE_MODEL,
        train=TrainConfig(crop_height=32, crop_width=64, steps=15, lr=1e-3, seed=7),
    )
    sample = gen_rds(32, 64, two_plane_pattern(32, 64, near=8, far=4), max_disparity=16, seed=0)
    totals = Trainer(build_model(SMOKE_MODEL), cfg).train([sample]).curve["total"]
    finite = bool(np.all(np.isfinite(totals)))
    falling = float(totals.iloc[-3:].mean()) < float(totals.iloc[0])
    return finite and falling, f"loss {totals.iloc[0]:.3f} -> {totals.iloc[-1]:.3f}"


def check_adam(kernels: np.ndarray) -> CheckResult:
    w = Parameter(np.zeros(1), dtype=np.float64)
    w.grad = np.ones(1)
    adam_step([w], lr=0.1)
    return abs(float(w.data[0]) + 0.1) < 1e-6, f"w={float(w.data[0]):.6f}"


def check_pfm_roundtrip(kernels: np.ndarray) -> CheckResult:
    data = np.random.default_rng(9).standard_normal((4, 5)).astype(np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "map.pfm"
        write_pfm(path, data)
        back = read_pfm(path)
    return bool(np.array_equal(back, data)), "4×5 map"


def check_rds_warp(kernels: np.ndarray) -> CheckResult:
    sample = gen_rds(32, 64, two_plane_pattern(32, 64), max_disparity=32, seed=3)
    left, right, disp = sample.pair.left, sample.pair.right, sample.gt_disparity.astype(int)
    ys, xs = np.nonzero(sample.valid)
    ok = np.array_equal(left[:, ys, xs], right[:, ys, xs - disp[ys, xs]])
    return bool(ok), f"{ys.size} non-occluded pixels"


CHECKS: Dict[str, Callable[[np.ndarray], CheckResult]] = {
    "haar_hand_case": check_haar_hand_case,
    "haar_reconstruction": check_haar_reconstruction,
    "haar_window_oracle": check_haar_window_oracle,
    "conv2d_oracle": check_conv2d_oracle,
    "conv3d_constant": check_conv3d_constant,
    "conv3d_oracle": check_conv3d_oracle,
    "conv_adjoint": check_conv_adjoint,
    "cost_volume_oracle": check_cost_volume_oracle,
    "mca_oracles": check_mca_oracles,
    "scan_oracle": check_scan_oracle,
    "regression": check_regression,
    "soft_argmax_oracle": check_soft_argmax_oracle,
    "smooth_l1": check_smooth_l1,
    "metrics": check_metrics,
    "mae_oracle": check_mae_oracle,
    "gradients": check_gradients,
    "mca_gradients": check_mca_gradients,
    "aggregation_gradients": check_aggregation_gradients,
    "hfdo_gradients": check_hfdo_gradients,
    "loss_gradients": check_loss_gradients,
    "adam": check_adam,
    "pfm_roundtrip": check_pfm_roundtrip,
    "rds_warp": check_rds_warp,
    "flop_scaling": check_flop_scaling,
    "training_smoke": check_training_smoke,
}


def corrupted_haar_kernels() -> np.ndarray:
    """Fault-injection kernels: the HH filter loses its scale."""
    bad = HAAR_KERNELS.copy()
    bad[3] *= 2.0
    return bad


def run_selftest(haar_kernels: np.ndarray = HAAR_KERNELS) -> pd.DataFrame:
    rows = []
    for name, check in CHECKS.items():
        start = time.perf_counter()
        try:
            passed, detail = check(haar_kernels)
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        rows.append(
            {"check": name, "passed": bool(passed), "detail": detail, "seconds": time.perf_counter() - start}
        )
        logger.info(f"selftest {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    return pd.DataFrame(rows, columns=["check", "passed", "detail", "seconds"])
