"""Main entry point: command-line interface for training, conversion and evaluation."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .audio import load_audio, save_wav
from .checkpoint import AcousticCheckpoint
from .display import ConsoleDisplay, ProgressIndicator
from .errors import AdapterError, ConfigError, StageError, XVCError
from .evaluation import EvalConfig, evaluate
from .feature_cache import cache_features, compute_pair
from .features import fit_kmeans
from .manifest import DatasetManifest, select_by_duration
from .pipeline import ConversionPipeline, convert_batch
from .run_config import RunConfig
from .run_log import setup_logging
from .training import fine_tune, pretrain_crosslingual, save_history, train_standard

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_ADAPTER = 3

CHECKPOINT_NAME = "checkpoint.xvck"


class XVCCli:
    """Command-line interface for the voice conversion toolkit."""

    def __init__(self, display: Optional[ConsoleDisplay] = None):
        """Initialize the CLI."""
        self.display = display or ConsoleDisplay()

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Parse arguments, run one command and return its exit code."""
        parser = self._build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code == 0 else EXIT_USAGE

        setup_logging(args.log, args.verbose)
        logger.info("command_started", extra={"command": args.command})
        try:
            code = args.handler(args)
        except KeyboardInterrupt:
            self.display.show_warning("Interrupted by user")
            return EXIT_USAGE
        except XVCError as e:
            code = self._report(e)
        logger.info("command_finished", extra={"command": args.command, "exit_code": code})
        return code

    def _report(self, error: XVCError) -> int:
        cause = error.cause if isinstance(error, StageError) else error
        logger.error("command_failed", extra={"error_type": type(cause).__name__, "error": str(error)})
        self.display.show_error(str(error), getattr(cause, "hint", None))
        return EXIT_ADAPTER if isinstance(cause, AdapterError) else EXIT_USAGE

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="xvc",
            description="Cross-lingual any-to-one voice conversion toolkit",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
  python -m src.main train --config lj16k --manifest data/lj.jsonl --out runs/lj
  python -m src.main pretrain --config pretrain_150h --manifest data/zh.jsonl --out runs/zh_pre
  python -m src.main finetune --config finetune_2h --checkpoint runs/zh_pre/checkpoint.xvck \\
      --manifest data/lj_2h.jsonl --out runs/zh_ft
  python -m src.main convert-batch --config lj16k --checkpoint runs/zh_ft/checkpoint.xvck \\
      --manifest data/zh_test.jsonl --out out/zh
  python -m src.main evaluate --config lj16k --manifest data/zh_test.jsonl \\
      --converted out/zh/manifest.jsonl --target-manifest data/lj.jsonl --out out/zh/report.jsonl
            """,
        )
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", help="Config file or shipped config name (lj16k, emo22k, tiny, ...)")
        common.add_argument("--manifest", help="Dataset manifest (JSON Lines)")
        common.add_argument("--out", help="Output directory or file")
        common.add_argument("--seed", type=int, help="Overrides train.seed and pipeline.inference_seed")
        common.add_argument("--checkpoint", help="Acoustic model checkpoint")
        common.add_argument("--workers", type=int, help="Parallel workers (overrides pipeline.workers)")
        common.add_argument("--log", help="Write the run log to this file instead of stderr")
        common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")

        sub = parser.add_subparsers(dest="command", required=True)

        cmd = sub.add_parser("extract-features", parents=[common], help="Cache SSL features and mels")
        cmd.set_defaults(handler=self._extract_features)

        for name, helptext in (("train", "Train on target-speaker data only"),
                               ("pretrain", "Pre-train on multi-speaker source-language data")):
            cmd = sub.add_parser(name, parents=[common], help=helptext)
            cmd.add_argument("--cache", help="Feature cache directory")
            cmd.set_defaults(handler=self._train)

        cmd = sub.add_parser("finetune", parents=[common], help="Fine-tune a checkpoint on the target speaker")
        cmd.add_argument("--cache", help="Feature cache directory")
        cmd.set_defaults(handler=self._finetune)

        cmd = sub.add_parser("convert", parents=[common], help="Convert one audio file")
        cmd.add_argument("--input", required=True, help="Source WAV file")
        cmd.set_defaults(handler=self._convert)

        cmd = sub.add_parser("convert-batch", parents=[common], help="Convert every manifest entry")
        cmd.set_defaults(handler=self._convert_batch)

        cmd = sub.add_parser("evaluate", parents=[common], help="WER / PER / SSIM of converted audio")
        cmd.add_argument("--converted", required=True, help="Manifest of converted audio")
        cmd.add_argument("--target-manifest", required=True, help="Target speaker utterances")
        cmd.add_argument("--reference-mode", choices=["asr", "transcript"], help="Reference transcript source")
        cmd.add_argument("--name", default="converted", help="System name in the summary table")
        cmd.set_defaults(handler=self._evaluate)

        cmd = sub.add_parser("fit-codebook", parents=[common], help="Fit a k-means codebook on cached features")
        cmd.add_argument("--clusters", type=int, help="Number of clusters (default eval.kmeans_clusters)")
        cmd.add_argument("--cache", help="Feature cache directory")
        cmd.set_defaults(handler=self._fit_codebook)

        cmd = sub.add_parser("select-subset", parents=[common], help="Write a duration-budget subset manifest")
        cmd.add_argument("--hours", type=float, required=True, help="Duration budget in hours")
        cmd.add_argument("--strategy", choices=["shortest_first", "random"], default="shortest_first")
        cmd.set_defaults(handler=self._select_subset)
        return parser

    # Helpers

    @staticmethod
    def _require(args: argparse.Namespace, *names: str) -> None:
        missing = [f"--{n}" for n in names if not getattr(args, n)]
        if missing:
            raise ConfigError(f"'{args.command}' needs {', '.join(missing)}")

    @staticmethod
    def _config(args: argparse.Namespace, train_preset: str = "standard") -> RunConfig:
        config = RunConfig.load(args.config, train_preset).with_seed(args.seed)
        if args.workers:
            config.pipeline["workers"] = args.workers
        return config

    @staticmethod
    def _manifest(args: argparse.Namespace, config: Optional[RunConfig] = None) -> DatasetManifest:
        manifest = DatasetManifest.load(args.manifest)
        if config is not None and config.data["budget_hours"] > 0:
            manifest = select_by_duration(manifest, config.data["budget_hours"], config.data["selection"],
                                          config.train.seed)
        return manifest

    @staticmethod
    def _checkpoint_path(out: str) -> Path:
        path = Path(out)
        return path if path.suffix else path / CHECKPOINT_NAME

    # Commands

    def _extract_features(self, args: argparse.Namespace) -> int:
        self._require(args, "manifest", "out")
        config = self._config(args)
        manifest = self._manifest(args)
        adapters = config.build_adapters(["encoder"])
        context = config.train_context(args.out)
        index = cache_features(manifest, adapters, context.cache_dir, config.dsp, config.encoder_spec,
                               context.transform, context.codebook, context.workers)
        self.display.show_success(f"{len(index.entries)} utterances cached in {args.out} "
                                  f"({len(index.computed)} computed)")
        return EXIT_OK

    def _train(self, args: argparse.Namespace) -> int:
        self._require(args, "manifest", "out")
        phase = "pretrain" if args.command == "pretrain" else "standard"
        config = self._config(args, phase)
        manifest = self._manifest(args, config)
        adapters = config.build_adapters(["encoder"])
        self.display.show_header(f"{phase} training", {
            "utterances": len(manifest), "hours": f"{manifest.total_hours():.2f}",
            "steps": config.train.max_steps, "batch": config.train.batch_size, "seed": config.train.seed,
        })
        history: List[float] = []
        context = config.train_context(args.cache, show_progress=True)
        trainer = pretrain_crosslingual if phase == "pretrain" else train_standard
        checkpoint = trainer(manifest, config.acoustic, config.train, adapters, context, history)
        return self._save_checkpoint(checkpoint, args.out, history)

    def _finetune(self, args: argparse.Namespace) -> int:
        self._require(args, "manifest", "out", "checkpoint")
        config = self._config(args, "finetune")
        parent = AcousticCheckpoint.load(args.checkpoint)
        manifest = self._manifest(args, config)
        adapters = config.build_adapters(["encoder"])
        self.display.show_header("fine-tuning", {
            "parent": args.checkpoint, "utterances": len(manifest), "hours": f"{manifest.total_hours():.2f}",
            "steps": config.train.max_steps, "batch": config.train.batch_size,
        })
        history: List[float] = []
        context = config.train_context(args.cache, show_progress=True)
        checkpoint = fine_tune(parent, manifest, config.train, adapters, context, config.acoustic, history)
        return self._save_checkpoint(checkpoint, args.out, history)

    def _save_checkpoint(self, checkpoint: AcousticCheckpoint, out: str, history: List[float]) -> int:
        path = self._checkpoint_path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        checkpoint.save(path)
        save_history(history, path.with_name("loss.tsv"))
        self.display.show_training_summary(history, str(path))
        return EXIT_OK

    def _load_pipeline(self, args: argparse.Namespace, config: RunConfig, adapters) -> ConversionPipeline:
        with ProgressIndicator("Loading checkpoint"):
            return ConversionPipeline(config.pipeline_config(args.checkpoint, adapters.vocoder))

    def _convert(self, args: argparse.Namespace) -> int:
        self._require(args, "checkpoint", "out")
        config = self._config(args)
        adapters = config.build_adapters(["encoder", "vocoder"])
        pipeline = self._load_pipeline(args, config, adapters)
        source = load_audio(args.input, adapters.encoder.sample_rate)
        converted = pipeline.convert(source, adapters)
        out = Path(args.out)
        if not out.suffix:
            out = out / f"{Path(args.input).stem}.wav"
        save_wav(converted, out)
        self.display.show_success(f"Converted {args.input} -> {out} ({converted.duration:.2f} s)")
        return EXIT_OK

    def _convert_batch(self, args: argparse.Namespace) -> int:
        self._require(args, "checkpoint", "manifest", "out")
        config = self._config(args)
        adapters = config.build_adapters(["encoder", "vocoder"])
        pipeline = self._load_pipeline(args, config, adapters)
        result = convert_batch(DatasetManifest.load(args.manifest), pipeline, adapters, args.out,
                               config.pipeline["workers"])
        self.display.show_success(f"{len(result.outputs)} files written to {args.out}")
        if result.partial:
            self.display.show_failures(result.failures)
            return EXIT_PARTIAL
        return EXIT_OK

    def _evaluate(self, args: argparse.Namespace) -> int:
        self._require(args, "manifest", "out")
        config = self._config(args)
        adapters = config.build_adapters(["asr", "phonemizer", "embedder"])
        eval_cfg = EvalConfig(
            reference_mode=args.reference_mode or config.evaluation["reference_mode"],
            target_utterances=config.evaluation["target_utterances"],
            target_manifest=DatasetManifest.load(args.target_manifest),
            system_name=args.name,
            show_progress=True,
        )
        report = evaluate(DatasetManifest.load(args.converted), DatasetManifest.load(args.manifest),
                          eval_cfg, adapters)
        out = Path(args.out)
        if not out.suffix:
            out = out / "report.jsonl"
        report.save(out)
        self.display.show_table(report.summary_table(), "Objective evaluation (%)")
        self.display.show_success(f"Report written to {out}")
        return EXIT_OK

    def _fit_codebook(self, args: argparse.Namespace) -> int:
        self._require(args, "manifest", "out")
        config = self._config(args)
        manifest = self._manifest(args)
        adapters = config.build_adapters(["encoder"])
        cache_dir = args.cache or config.data["cache_dir"]
        # the codebook is fitted on untransformed features
        if cache_dir:
            index = cache_features(manifest, adapters, cache_dir, config.dsp, config.encoder_spec)
            features = [index.load(e.utterance_id)[0] for e in manifest]
        else:
            features = [compute_pair(manifest.resolve(e), adapters.encoder, config.dsp, config.encoder_spec)[0]
                        for e in manifest]
        clusters = args.clusters or config.evaluation["kmeans_clusters"]
        codebook = fit_kmeans(features, clusters, config.train.seed)
        out = Path(args.out)
        if not out.suffix:
            out = out / "codebook.kmcb"
        codebook.save(out)
        self.display.show_success(f"K={codebook.K} codebook written to {out} "
                                  f"(WCSS {codebook.wcss_history[-1]:.4g})")
        return EXIT_OK

    def _select_subset(self, args: argparse.Namespace) -> int:
        self._require(args, "manifest", "out")
        manifest = DatasetManifest.load(args.manifest)
        seed = args.seed if args.seed is not None else 0
        subset = select_by_duration(manifest, args.hours, args.strategy, seed)
        out = Path(args.out)
        subset.save(out, root_relative=str(Path(manifest.root).resolve()))
        self.display.show_success(f"{len(subset)} utterances ({subset.total_hours():.2f} h) written to {out}")
        return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    return XVCCli().run(argv)


if __name__ == "__main__":
    sys.exit(main())
