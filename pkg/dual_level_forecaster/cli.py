"""
  Command-line entry point.

  dual-level-forecaster ingest    --asf A.asf --amc 01.amc 02.amc --out scenes/
  dual-level-forecaster synth     --config configuration.json --seed 7 --count 64 --out scenes/
  dual-level-forecaster train     --data scenes/ --config configuration.json --out model.dmf
  dual-level-forecaster forecast  --ckpt model.dmf --scene scenes/scene_0000.json --intents 5 --steps 3 --out pred.json
  dual-level-forecaster eval      --pred pred.json --gt scenes/scene_0000.json --out report.json
  dual-level-forecaster gradcheck
  dual-level-forecaster ablate    --data scenes/ --eval held_out/ --config configuration.json --out ablation.csv

  Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import sys
import logging
import argparse
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional
import numpy as np

from dual_level_forecaster.version import __version__, FORMAT_VERSION, SCENE_SCHEMA_VERSION
from dual_level_forecaster.mytypes import (ForecastIssue, UsageError, GradCheckError, RunManifest,
                                           TrainingVariant, USAGE_ISSUES)
from dual_level_forecaster.configs import load_config
from dual_level_forecaster.configs.constants import ConfigBlock
from dual_level_forecaster.setup.bootstrap import Bootstrap
from dual_level_forecaster.exporters.main import LocalFileExporter, MANIFEST_NAME
from dual_level_forecaster.importers.main import ingest_files, load_mapping
from dual_level_forecaster.importers.scenes import SceneSynthConfig, groups_from_scenes, mix_scenes
from dual_level_forecaster.importers.synthetic import SyntheticSpec, synthetic_dataset
from dual_level_forecaster.training.trainer import TrainConfig, train, compare_variants
from dual_level_forecaster.training.checkpoint import load_checkpoint, save_checkpoint
from dual_level_forecaster.forecasting.rollout import RolloutTree, forecast_progressive
from dual_level_forecaster.metrics.evaluate import MetricConfig, evaluate, reports_to_frame
from dual_level_forecaster.gradcore.suite import run_suite, DEFAULT_SEEDS
from dual_level_forecaster.utils.io import (read_json, read_scene, read_scene_dir, list_scene_files,
                                            file_digest, digest_text, dumps_json)

VERSION_TEXT = f"dual-level-forecaster {__version__} (checkpoint format {FORMAT_VERSION}, scene schema {SCENE_SCHEMA_VERSION})"


class CommandRun:
  """Inputs, outputs and seed of one command, turned into its manifest at the end."""

  def __init__(self, command:str, config:dict, seed:Optional[int]):
    self.command = command
    self.config = config
    self.seed = seed
    self.inputs: list[Path] = []
    self.outputs: list[Path] = []
    self.started_at = datetime.now(timezone.utc).isoformat()

  def require(self, path:str|Path, what:str) -> Path:
    path = Path(path)
    if not path.exists():
      raise UsageError(msg=f"{what} not found", key=str(path))
    if path.is_dir():
      self.inputs.extend(list_scene_files(path))
    else:
      self.inputs.append(path)
    return path

  def manifest(self) -> RunManifest:
    return RunManifest(command=self.command,
                       config_hash=digest_text(dumps_json(self.config)),
                       rng_seed=self.seed,
                       input_digests={str(p): file_digest(p) for p in self.inputs},
                       tool_version=__version__,
                       started_at=self.started_at,
                       finished_at=datetime.now(timezone.utc).isoformat(),
                       outputs=[str(p) for p in self.outputs])


def _config(args, run_overrides:Optional[dict]=None) -> dict:
  path = getattr(args, 'config', None)
  if path and not Path(path).is_file():
    raise UsageError(msg="configuration file not found", key=str(path))
  return load_config(path, run_overrides)


def _write_manifest(run:CommandRun, out:Path, is_dir:bool):
  if is_dir:
    exporter, name = LocalFileExporter({"location": str(out)}), MANIFEST_NAME
  else:
    exporter, name = LocalFileExporter({"location": str(out.parent)}), f"{out.name}.manifest.json"
  exporter.export_manifest(run.manifest(), name)


# ---------------------------------------------------------------- commands

def cmd_ingest(args, threads:int) -> CommandRun:
  run = CommandRun('ingest', {"fps": args.fps, "history_len": args.history_len}, None)
  mapping_path = run.require(args.mapping, "mapping file") if args.mapping else None
  mapping = load_mapping(mapping_path)
  asf = run.require(args.asf, "ASF file")
  amcs = [run.require(p, "AMC file") for p in args.amc]
  scenes = ingest_files(asf, amcs, mapping, target_fps=args.fps, history_len=args.history_len)
  exporter = LocalFileExporter({"location": args.out})
  run.outputs = [exporter.export_scene(name, scene) for name, scene in scenes.items()]
  _write_manifest(run, Path(args.out), is_dir=True)
  return run


def cmd_synth(args, threads:int) -> CommandRun:
  if args.clips:
    config = _config(args, {ConfigBlock.SYNTHESIS.value: {"rng_seed": args.seed,
                                                           "persons_per_scene": args.persons}})
    cfg = SceneSynthConfig.from_dict(config[ConfigBlock.SYNTHESIS.value])
    run = CommandRun('synth', config, cfg.rng_seed)
    if args.config:
      run.require(args.config, "configuration file")
    groups = groups_from_scenes(read_scene_dir(run.require(args.clips, "clip directory")))
    scenes = mix_scenes(groups, cfg, args.count or 16)
  else:
    config = _config(args, {ConfigBlock.SYNTHETIC.value: {"seed": args.seed, "scene_count": args.count,
                                                           "persons": args.persons}})
    spec = SyntheticSpec.from_dict(config[ConfigBlock.SYNTHETIC.value])
    run = CommandRun('synth', config, spec.seed)
    if args.config:
      run.require(args.config, "configuration file")
    scenes = synthetic_dataset(spec, threads=threads)
  exporter = LocalFileExporter({"location": args.out})
  run.outputs = [exporter.export_scene(f"scene_{i:04d}", scene) for i, scene in enumerate(scenes)]
  _write_manifest(run, Path(args.out), is_dir=True)
  return run


def cmd_train(args, threads:int) -> CommandRun:
  config = _config(args, {ConfigBlock.TRAINING.value: {"rng_seed": args.seed, "epochs": args.epochs}})
  train_cfg = TrainConfig.from_dict(config)
  run = CommandRun('train', train_cfg.to_dict(), train_cfg.rng_seed)
  if args.config:
    run.require(args.config, "configuration file")
  scenes = read_scene_dir(run.require(args.data, "data directory"))
  resume = load_checkpoint(run.require(args.resume, "checkpoint")) if args.resume else None
  state = train(scenes, train_cfg, out_dir=args.run_dir, resume=resume)
  out = Path(args.out)
  save_checkpoint(out, state.to_checkpoint())
  run.outputs = [out]
  _write_manifest(run, out, is_dir=False)
  return run


def cmd_forecast(args, threads:int) -> CommandRun:
  config = _config(args, {ConfigBlock.FORECAST.value: {"M": args.intents, "steps": args.steps,
                                                        "max_branches": args.max_branches}})
  forecast = config[ConfigBlock.FORECAST.value]
  m, steps = int(forecast.get("M", 5)), int(forecast.get("steps", 3))
  run = CommandRun('forecast', config, args.seed)
  checkpoint = load_checkpoint(run.require(args.ckpt, "checkpoint"))
  scene = read_scene(run.require(args.scene, "scene file"))
  tree = forecast_progressive(scene.history, checkpoint, m, steps, np.random.default_rng(args.seed),
                              fps=scene.fps, max_branches=forecast.get("max_branches"), threads=threads)
  out = Path(args.out)
  LocalFileExporter({"location": str(out.parent)}).export_json(out.name, tree.to_dict())
  run.outputs = [out]
  _write_manifest(run, out, is_dir=False)
  return run


def cmd_eval(args, threads:int) -> CommandRun:
  config = _config(args)
  metric_cfg = MetricConfig.from_dict(config[ConfigBlock.METRICS.value])
  run = CommandRun('eval', config, None)
  tree = RolloutTree.from_dict(read_json(run.require(args.pred, "prediction file"), "prediction file"))
  gt_path = run.require(args.gt, "ground-truth scene")
  scene = read_scene(gt_path)
  reports = evaluate(tree, scene.future, metric_cfg)
  out = Path(args.out)
  exporter = LocalFileExporter({"location": str(out.parent)})
  json_path = exporter.export_json(out.name, {"scene": gt_path.stem, "reports": [r.to_dict() for r in reports]})
  csv_path = exporter.export_dataframe(out.stem, reports_to_frame({gt_path.stem: reports}))
  run.outputs = [json_path, csv_path]
  _write_manifest(run, out, is_dir=False)
  return run


def cmd_gradcheck(args, threads:int) -> CommandRun:
  seeds = [args.seed] if args.seed is not None else list(DEFAULT_SEEDS)
  run = CommandRun('gradcheck', {"seeds": seeds}, args.seed)
  results = run_suite(seeds)
  if args.out:
    out = Path(args.out)
    LocalFileExporter({"location": str(out.parent)}).export_json(out.name, [r.to_dict() for r in results])
    run.outputs = [out]
    _write_manifest(run, out, is_dir=False)
  failed = [r for r in results if not r.passed]
  for r in failed:
    logging.error(f"gradcheck failed: {r.name} seed={r.seed} max rel error {r.max_rel_error:.3e}")
  if failed:
    raise GradCheckError(msg=f"{len(failed)} of {len(results)} gradient checks failed")
  print(f"gradcheck: all {len(results)} checks passed")
  return run


def cmd_ablate(args, threads:int) -> CommandRun:
  config = _config(args, {ConfigBlock.TRAINING.value: {"epochs": args.epochs}})
  train_cfg = TrainConfig.from_dict(config)
  run = CommandRun('ablate', train_cfg.to_dict(), None)
  if args.config:
    run.require(args.config, "configuration file")
  try:
    variants = [TrainingVariant(v) for v in args.variants]
  except ValueError as err:
    raise UsageError(msg=str(err), key='--variants')
  train_scenes = read_scene_dir(run.require(args.data, "data directory"))
  eval_scenes = read_scene_dir(run.require(args.eval, "evaluation directory"))
  frame = compare_variants(train_scenes, eval_scenes, train_cfg, variants, args.seeds)
  out = Path(args.out)
  run.outputs = [LocalFileExporter({"location": str(out.parent)}).export_dataframe(out.name, frame)]
  _write_manifest(run, out, is_dir=False)
  return run


# ---------------------------------------------------------------- parser

def arg_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(prog='dual-level-forecaster',
                                   description="Stochastic multi-person 3D motion forecasting.")
  parser.add_argument('--version', action='version', version=VERSION_TEXT)
  parser.add_argument('--threads', type=int, default=None,
                      help="worker threads (default: DUMMF_THREADS or 1)")
  parser.add_argument('--log-level', default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
  parser.add_argument('--env', default="", help="load .env.<env> and log to logs_<env>/")
  sub = parser.add_subparsers(dest='command', required=True)

  p = sub.add_parser('ingest', help="ASF/AMC files -> canonical scene JSON")
  p.add_argument('--asf', required=True)
  p.add_argument('--amc', required=True, nargs='+')
  p.add_argument('--mapping', default=None, help="joint mapping table (default: bundled CMU table)")
  p.add_argument('--fps', type=float, default=15.0)
  p.add_argument('--history-len', type=int, default=45)
  p.add_argument('--out', required=True)
  p.set_defaults(handler=cmd_ingest)

  p = sub.add_parser('synth', help="synthetic or mixed multi-person scenes")
  p.add_argument('--config', default=None)
  p.add_argument('--seed', type=int, default=None)
  p.add_argument('--count', type=int, default=None)
  p.add_argument('--persons', type=int, default=None)
  p.add_argument('--clips', default=None, help="scene directory of 1- and 2-person clips to mix")
  p.add_argument('--out', required=True)
  p.set_defaults(handler=cmd_synth)

  p = sub.add_parser('train', help="dual-level training")
  p.add_argument('--data', required=True)
  p.add_argument('--config', default=None)
  p.add_argument('--out', required=True)
  p.add_argument('--seed', type=int, default=None)
  p.add_argument('--epochs', type=int, default=None)
  p.add_argument('--resume', default=None)
  p.add_argument('--run-dir', default=None, help="per-epoch checkpoints and metrics.jsonl")
  p.set_defaults(handler=cmd_train)

  p = sub.add_parser('forecast', help="progressive multi-intent rollout")
  p.add_argument('--ckpt', required=True)
  p.add_argument('--scene', required=True)
  p.add_argument('--config', default=None)
  p.add_argument('--intents', type=int, default=None)
  p.add_argument('--steps', type=int, default=None)
  p.add_argument('--max-branches', type=int, default=None)
  p.add_argument('--seed', type=int, default=0)
  p.add_argument('--out', required=True)
  p.set_defaults(handler=cmd_forecast)

  p = sub.add_parser('eval', help="metrics per rollout horizon")
  p.add_argument('--pred', required=True)
  p.add_argument('--gt', required=True)
  p.add_argument('--config', default=None)
  p.add_argument('--out', required=True)
  p.set_defaults(handler=cmd_eval)

  p = sub.add_parser('gradcheck', help="finite-difference check of every primitive and loss")
  p.add_argument('--seed', type=int, default=None)
  p.add_argument('--out', default=None)
  p.set_defaults(handler=cmd_gradcheck)

  p = sub.add_parser('ablate', help="train and compare training variants")
  p.add_argument('--data', required=True)
  p.add_argument('--eval', required=True)
  p.add_argument('--config', default=None)
  p.add_argument('--variants', nargs='+', default=[v.value for v in (TrainingVariant.FULL,
                                                                      TrainingVariant.NO_SEPARATION)])
  p.add_argument('--seeds', type=int, nargs='+', default=list(DEFAULT_SEEDS))
  p.add_argument('--epochs', type=int, default=None)
  p.add_argument('--out', required=True)
  p.set_defaults(handler=cmd_ablate)
  return parser


def main(argv:Optional[list[str]]=None) -> int:
  try:
    args = arg_parser().parse_args(argv)
  except SystemExit as exit_:
    return int(exit_.code or 0)

  try:
    Bootstrap.setup(Path.cwd(), args.env, args.log_level, command=args.command)
    threads = args.threads if args.threads is not None else Bootstrap.get('threads', 1)
    if threads < 1:
      raise UsageError(msg=f"--threads must be >= 1, got {threads}")
    handler: Callable = args.handler
    handler(args, threads)
  except ForecastIssue as issue:
    logging.error(f"{args.command}: {issue}")
    print(f"error: {issue}", file=sys.stderr)
    return 2 if issue.issue_type in USAGE_ISSUES else 1
  return 0


if __name__ == '__main__':
  sys.exit(main())
