import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .bench import run_bench
from .config import ERROR_MAP_SCALE_PX, LOG_FORMAT, LOG_LEVEL
from .dataset.calibration import disparity_to_depth, read_calibration, write_calibration
from .dataset.images import read_image, write_image
from .dataset.manifest import load_manifest, write_manifest
from .dataset.pfm import read_pfm, write_pfm
from .dataset.synthetic import DEFAULT_CALIBRATION, gen_rds, two_plane_pattern
from .errors import ConfigError, RRESMError
from .evaluation.error_map import save_error_map
from .evaluation.report import evaluate_sample, evaluation_mask, ground_truth_disparity, reports_frame, write_report
from .models.run_config import RunConfig, load_run_config, model_config_from_meta
from .models.stereo_models import StereoPair, StereoSample
from .network.hfdo import HAAR_KERNELS
from .network.pipeline import RRESMNet, build_model
from .numerics.checkpoint import load_checkpoint, manifest_parameter_count, read_manifest, save_checkpoint
from .selftest import corrupted_haar_kernels, run_selftest
from .training.trainer import Trainer, write_loss_curve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SELFTEST = 3

_USAGE_ERRORS = {"config_error", "usage_error"}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here exit with 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _failure(e: Exception) -> Dict[str, Any]:
    error_type = e.error_type if isinstance(e, RRESMError) else "io_error"
    return {"error": str(e), "error_type": error_type}


class StereoCLI:
    # Model and configuration helpers
    def load_config(self, args) -> RunConfig:
        overrides: Dict[str, Any] = {}
        for item in getattr(args, "set", None) or []:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        for flag, key in (
            ("seed", "train.seed"),
            ("lr", "train.lr"),
            ("steps", "train.steps"),
            ("epochs", "train.epochs"),
            ("checkpoint", "paths.checkpoint"),
            ("manifest", "paths.manifest"),
            ("out", "paths.output_dir"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                overrides[key] = value
        return load_run_config(getattr(args, "config", None), overrides)

    def load_model(self, cfg: RunConfig, checkpoint: Optional[str]) -> RRESMNet:
        """Rebuild the model described by the checkpoint (or the config) and load its weights."""
        if checkpoint is None:
            return build_model(cfg.model)
        manifest = read_manifest(checkpoint)
        model_cfg = model_config_from_meta(manifest.get("meta", {})) or cfg.model
        # ablation switches from the command line still apply to a stored model
        model_cfg = model_cfg.model_copy(
            update={
                "mca": model_cfg.mca.model_copy(
                    update={"unit_attention": cfg.model.mca.unit_attention or model_cfg.mca.unit_attention}
                )
            }
        )
        model = build_model(model_cfg)
        load_checkpoint(model, checkpoint)
        return model

    # Commands
    def handle_infer(self, args) -> Dict[str, Any]:
        """Predict the refined disparity for one pair and write it (plus depth / error map / report)."""
        try:
            cfg = self.load_config(args)
            model = self.load_model(cfg, args.checkpoint or cfg.paths.checkpoint)
            pair = StereoPair(left=read_image(args.left), right=read_image(args.right))
            disparity = model.predict(pair)
            out_dir = Path(cfg.paths.output_dir)
            written = {"disparity": write_pfm(out_dir / "disparity.pfm", disparity)}

            calib = read_calibration(args.calib) if args.calib else None
            if calib is not None:
                written["depth"] = write_pfm(out_dir / "depth.pfm", disparity_to_depth(disparity, calib).values)

            result: Dict[str, Any] = {"success": f"Wrote disparity for {pair.height}×{pair.width} pair"}
            if args.gt:
                sample = StereoSample(pair=pair, gt_disparity=read_pfm(args.gt), calib=calib, name=Path(args.left).stem)
                report = evaluate_sample(disparity, sample, model.cfg.max_disparity)
                gt = ground_truth_disparity(sample)
                mask = evaluation_mask(sample, gt, model.cfg.max_disparity)
                written["error_map"] = save_error_map(out_dir / "error_map.png", disparity, gt, mask, ERROR_MAP_SCALE_PX)
                written["report"] = write_report(out_dir / "report.jsonl", [report])
                result["report"] = report.model_dump()
            result["outputs"] = written
            return result
        except (RRESMError, OSError) as e:
            return _failure(e)

    def handle_train(self, args) -> Dict[str, Any]:
        """Train with Adam on a manifest and write the checkpoint and loss curve."""
        try:
            cfg = self.load_config(args)
            if not cfg.paths.manifest:
                return {"error": "a manifest is required for training (--manifest)", "error_type": "usage_error"}
            samples = load_manifest(cfg.paths.manifest)
            model = build_model(cfg.model)
            result = Trainer(model, cfg).train(samples)
            out_dir = Path(cfg.paths.output_dir)
            curve_path = write_loss_curve(result.curve, out_dir / "loss_curve.tsv")
            checkpoint = save_checkpoint(model, cfg.paths.checkpoint, meta={"model": cfg.model.model_dump()})
            final = float(result.curve["total"].iloc[-1]) if len(result.curve) else float("nan")
            return {
                "success": f"Trained {result.steps} steps (final loss {final:.4f})",
                "checkpoint": checkpoint,
                "loss_curve": curve_path,
                "skipped": result.skipped,
            }
        except (RRESMError, OSError) as e:
            return _failure(e)

    def handle_eval(self, args) -> Dict[str, Any]:
        """Evaluate a checkpoint on every sample of a manifest."""
        try:
            cfg = self.load_config(args)
            if not cfg.paths.manifest:
                return {"error": "a manifest is required for evaluation (--manifest)", "error_type": "usage_error"}
            model = self.load_model(cfg, args.checkpoint or cfg.paths.checkpoint)
            samples = load_manifest(cfg.paths.manifest)
            if not samples:
                return {"error": "manifest lists no samples", "error_type": "contract_error"}
            reports = [evaluate_sample(model.predict(s.pair), s, model.cfg.max_disparity) for s in samples]
            out_dir = Path(cfg.paths.output_dir)
            path = write_report(out_dir / "report.jsonl", reports)
            table = reports_frame(reports)
            print(table.to_string(index=False))
            return {"success": f"Evaluated {len(reports)} samples", "report": path}
        except (RRESMError, OSError) as e:
            return _failure(e)

    def handle_bench(self, args) -> Dict[str, Any]:
        """Time forward passes; parameter count comes from the checkpoint manifest when given."""
        try:
            cfg = self.load_config(args)
            model = self.load_model(cfg, args.checkpoint)
            count = manifest_parameter_count(read_manifest(args.checkpoint)) if args.checkpoint else None
            report = run_bench(model, args.height, args.width, iters=args.iters, seed=cfg.train.seed, parameter_count=count)
            print(
                f"{report.height}×{report.width}: mean {report.mean_ms:.2f} ms, median {report.median_ms:.2f} ms, "
                f"std {report.std_ms:.2f} ms (CV {100 * report.cv:.1f}%), "
                f"{report.parameter_count} parameters, {report.gflops:.3f} GFLOPs"
            )
            return {"success": "Benchmark finished", "report": report.model_dump()}
        except (RRESMError, OSError) as e:
            return _failure(e)

    def handle_selftest(self, args) -> Dict[str, Any]:
        table = run_selftest(corrupted_haar_kernels() if args.corrupt_haar else HAAR_KERNELS)
        print(table.to_string(index=False))
        failed = table.loc[~table["passed"], "check"].tolist()
        if failed:
            return {"error": f"{len(failed)} checks failed: {', '.join(failed)}", "error_type": "selftest_failure"}
        return {"success": f"All {len(table)} checks passed"}

    def handle_synth(self, args) -> Dict[str, Any]:
        """Write random-dot stereograms with PFM ground truth, calibration files and a manifest."""
        try:
            cfg = self.load_config(args)
            out_dir = Path(cfg.paths.output_dir)
            pattern = two_plane_pattern(args.height, args.width, near=args.near, far=args.far)
            rows: List[List[str]] = []
            for i in range(args.count):
                name = f"rds_{i:03d}"
                sample = gen_rds(
                    args.height, args.width, pattern, cfg.model.max_disparity, seed=cfg.train.seed + i, name=name
                )
                gt = np.where(sample.valid, sample.gt_disparity, np.inf).astype(np.float32)
                write_image(out_dir / f"{name}_left.png", sample.pair.left)
                write_image(out_dir / f"{name}_right.png", sample.pair.right)
                write_pfm(out_dir / f"{name}_disp.pfm", gt)
                write_calibration(out_dir / f"{name}.calib", sample.calib or DEFAULT_CALIBRATION)
                rows.append([f"{name}_left.png", f"{name}_right.png", f"{name}_disp.pfm", f"{name}.calib"])
            manifest = write_manifest(out_dir / "manifest.tsv", rows)
            return {"success": f"Wrote {args.count} stereograms", "manifest": manifest}
        except (RRESMError, OSError) as e:
            return _failure(e)

    def create_parser(self) -> argparse.ArgumentParser:
        parser = _Parser(description="RRESM endoscopic stereo matching")
        parser.add_argument("--log-level", default=LOG_LEVEL, help="Logging level (default from RRESM_LOG_LEVEL)")
        subparsers = parser.add_subparsers(dest="command", help="Available commands", parser_class=_Parser)

        def common(p, checkpoint_help: str):
            p.add_argument("--config", help="Flat key=value config file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override one config key")
            p.add_argument("--checkpoint", help=checkpoint_help)
            p.add_argument("--out", help="Output directory")
            p.add_argument("--seed", type=int, help="Random seed")

        infer = subparsers.add_parser("infer", help="Predict disparity for one stereo pair")
        common(infer, "Checkpoint to load")
        infer.add_argument("--left", required=True, help="Left image (PNG/PGM)")
        infer.add_argument("--right", required=True, help="Right image (PNG/PGM)")
        infer.add_argument("--gt", help="Ground-truth disparity PFM")
        infer.add_argument("--calib", help="Calibration file (focal_px, baseline_mm)")

        train = subparsers.add_parser("train", help="Train at toy scale")
        common(train, "Where to write the trained checkpoint")
        train.add_argument("--manifest", help="Training manifest")
        train.add_argument("--steps", type=int, help="Number of optimizer steps")
        train.add_argument("--epochs", type=int, help="Number of epochs (when --steps is not given)")
        train.add_argument("--lr", type=float, help="Learning rate")

        evaluate = subparsers.add_parser("eval", help="Evaluate a checkpoint on a manifest")
        common(evaluate, "Checkpoint to load")
        evaluate.add_argument("--manifest", help="Evaluation manifest")

        bench = subparsers.add_parser("bench", help="Benchmark forward passes")
        common(bench, "Checkpoint to load (random weights when omitted)")
        bench.add_argument("--height", type=int, default=256, help="Input height")
        bench.add_argument("--width", type=int, default=512, help="Input width")
        bench.add_argument("--iters", type=int, default=100, help="Timed iterations (>= 10)")

        selftest = subparsers.add_parser("selftest", help="Run the oracle and invariant checks")
        selftest.add_argument("--corrupt-haar", action="store_true", help=argparse.SUPPRESS)

        synth = subparsers.add_parser("synth", help="Write a random-dot stereogram dataset")
        synth.add_argument("--config", help="Flat key=value config file")
        synth.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override one config key")
        synth.add_argument("--out", help="Output directory")
        synth.add_argument("--seed", type=int, help="Random seed")
        synth.add_argument("--count", type=int, default=8, help="Number of stereograms")
        synth.add_argument("--height", type=int, default=256, help="Image height")
        synth.add_argument("--width", type=int, default=512, help="Image width")
        synth.add_argument("--near", type=int, default=16, help="Disparity of the right half (px)")
        synth.add_argument("--far", type=int, default=8, help="Disparity of the left half (px)")
        return parser

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Run the CLI application and return the process exit code."""
        parser = self.create_parser()
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, str(args.log_level).upper(), logging.INFO), format=LOG_FORMAT, stream=sys.stderr
        )

        handlers = {
            "infer": self.handle_infer,
            "train": self.handle_train,
            "eval": self.handle_eval,
            "bench": self.handle_bench,
            "selftest": self.handle_selftest,
            "synth": self.handle_synth,
        }
        if args.command not in handlers:
            parser.print_help()
            return EXIT_USAGE
        result = handlers[args.command](args)

        if "error" in result:
            print(f"Error: {result['error']}", file=sys.stderr)
            if result["error_type"] == "selftest_failure":
                return EXIT_SELFTEST
            return EXIT_USAGE if result["error_type"] in _USAGE_ERRORS else EXIT_DATA
        print(result["success"])
        for key, value in result.get("outputs", {}).items():
            print(f"  {key}: {value}")
        return EXIT_OK


def main():
    """Main entry point"""
    cli = StereoCLI()
    sys.exit(cli.run())


if __name__ == "__main__":
    main()
