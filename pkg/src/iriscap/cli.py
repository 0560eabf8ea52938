"""Command-line driver for the capacity grid.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 compute failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .dataset import ManifestError, apply_quality_policy, build_plan, load_manifest, write_manifest
from .encoder import build_filter_bank, encode, load_texture, resample_texture
from .engine import MissingTemplateError, SystemConfig, run_nn
from .report import calibrate_store, evaluate_store, result_row, write_curve, write_results
from .store import ConfigMismatchError, IncompleteStoreError, ScoreStore, StoreError
from .synth import generate_population
from .template import (
    FormatError,
    TemplateError,
    TemplateGeometry,
    load_template,
    save_template,
    stack_resolutions,
    strip_boundaries,
)

log = logging.getLogger("iriscap")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_COMPUTE = 0, 2, 3, 4


class DataError(RuntimeError):
    pass


def template_name(sample_id: str, tag: str, variant: str) -> str:
    """File name of a template; ``variant`` is r0, r1, r2 or multi."""
    return f"{sample_id}_{tag}_{variant}.irc"


def _variant(resolution_mode: str) -> str:
    return "r0" if resolution_mode == "Single" else "multi"


def _template_dir(cfg: ExperimentConfig) -> Path:
    return cfg.template_dir or cfg.output_dir / "templates"


def _manifest_path(cfg: ExperimentConfig) -> Path:
    return cfg.manifest or cfg.output_dir / "manifest.csv"


def _store_path(cfg: ExperimentConfig, sc: SystemConfig) -> Path:
    return cfg.output_dir / "stores" / f"{sc.label()}.store"


def _cells(cfg: ExperimentConfig):
    g = cfg.grid
    for tag in g.dimension_tags:
        for res in g.resolution_modes:
            for quality in g.quality_modes:
                yield tag, res, quality


def _write_run_manifest(cfg: ExperimentConfig, command: str, outputs: list):
    path = cfg.output_dir / "run_manifest.json"
    data = {}
    if path.exists():
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            data = {}
    data["versions"] = {"iriscap": __version__, "python": platform.python_version(),
                        "numpy": np.__version__, "scipy": scipy.__version__}
    data["experiment_seed"] = cfg.experiment_seed
    data["config"] = cfg.to_dict()
    data.setdefault("commands", {})[command] = {"outputs": sorted(outputs)}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_records(cfg: ExperimentConfig):
    path = _manifest_path(cfg)
    if not path.exists():
        raise DataError(f"manifest {path} not found (run 'synth' or set dataset.manifest)")
    return load_manifest(path)


# --- commands -----------------------------------------------------------------

def cmd_synth(cfg: ExperimentConfig, args) -> list:
    if cfg.synth is None:
        raise ConfigError("'synth' needs a dataset.synth section")
    out_dir = _template_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    written, records = [], None
    for tag in cfg.grid.dimension_tags:
        for res in cfg.grid.resolution_modes:
            geometry = TemplateGeometry.stripped(tag, res)
            pop = generate_population(cfg.population_params(geometry))
            for sample_id, t in pop.templates.items():
                written.append(save_template(t, out_dir / template_name(sample_id, tag, _variant(res))))
            records = records or pop.records
            log.info("synth %s/%s: %d identities", tag, res, pop.params.n_identities)
    manifest = _manifest_path(cfg)
    manifest.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(records, manifest)
    return [manifest] + written


def cmd_encode(cfg: ExperimentConfig, args) -> list:
    records = _load_records(cfg)
    if not records:
        log.warning("manifest is empty; nothing to encode")
        return []
    bank = build_filter_bank(cfg.filters)
    out_dir = _template_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = _manifest_path(cfg).parent
    written = []
    for r in records:
        tex_path = base / r.path
        occ_path = tex_path.with_name(tex_path.stem + ".mask.pgm")
        try:
            texture = load_texture(tex_path, occ_path if occ_path.exists() else None)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read texture for {r.sample_id!r}: {exc}") from None
        for tag in cfg.grid.dimension_tags:
            geometry = TemplateGeometry.extracted(tag, "Single")
            grid_tex = texture
            if texture.shape != (geometry.rows, geometry.cols):
                grid_tex = resample_texture(texture, geometry.rows, geometry.cols)
            singles = []
            for k in range(3):
                t = strip_boundaries(encode(grid_tex, bank, k, geometry, r.identity_id, r.sample_id))
                written.append(save_template(t, out_dir / template_name(r.sample_id, tag, f"r{k}")))
                singles.append(t)
            multi = stack_resolutions(*singles)
            written.append(save_template(multi, out_dir / template_name(r.sample_id, tag, "multi")))
    return written


def _template_loader(cfg: ExperimentConfig, tag: str, res: str):
    directory = _template_dir(cfg)

    def load(record):
        path = directory / template_name(record.sample_id, tag, _variant(res))
        try:
            return load_template(path)
        except FileNotFoundError:
            raise MissingTemplateError(f"template {path} for sample {record.sample_id!r} "
                                       f"not found") from None
    return load


def _plan(cfg, records, quality):
    plan = build_plan(apply_quality_policy(records, cfg.quality_policy(quality)))
    if plan.M == 0:
        raise DataError(f"no identities left under {quality}")
    return plan


def cmd_run(cfg: ExperimentConfig, args) -> list:
    records = _load_records(cfg)
    if not records:
        raise DataError("dataset has zero identities")
    written = []
    for tag, res, quality in _cells(cfg):
        plan = _plan(cfg, records, quality)
        loader = _template_loader(cfg, tag, res)
        cache = {}

        def cached(record, loader=loader, cache=cache):
            if record.sample_id not in cache:
                cache[record.sample_id] = loader(record)
            return cache[record.sample_id]

        for level in cfg.grid.feature_levels:
            sc = SystemConfig(tag, res, quality, level, experiment_seed=cfg.experiment_seed)
            path = _store_path(cfg, sc)
            store = run_nn(plan, cached, sc, path, workers=cfg.workers,
                           chunk_size=cfg.chunk_size, resume=args.resume)
            log.info("%s: M=%d, %d records", sc.label(), plan.M, len(store.records))
            written.append(path)
    return written


def _open_store(cfg, sc) -> ScoreStore:
    path = _store_path(cfg, sc)
    if not path.exists():
        raise IncompleteStoreError(f"store {path} missing; run 'run' first")
    store = ScoreStore.open(path)
    store.require_complete()
    if store.config != sc.store_key():
        raise ConfigMismatchError(f"{path}: built for {store.config}, expected {sc.store_key()}")
    return store


def cmd_calibrate(cfg: ExperimentConfig, args) -> list:
    path = cfg.output_dir / "thresholds.csv"
    rows = []
    for tag, res, quality in _cells(cfg):
        store = _open_store(cfg, SystemConfig(tag, res, quality, 100,
                                              experiment_seed=cfg.experiment_seed))
        for op in cfg.grid.operating_points:
            t = calibrate_store(store, op)
            rows.append([tag, res, quality, f"{op:g}", f"{t.hd_threshold:.10f}",
                         f"{t.achieved_far:.8f}", len(store.imposters)])
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dimension", "resolution", "quality", "op", "hd_threshold",
                         "achieved_far", "n_imposter"])
        writer.writerows(rows)
    return [path]


def cmd_report(cfg: ExperimentConfig, args) -> list:
    rows, written = [], []
    curve_dir = cfg.output_dir / "curves"
    curve_dir.mkdir(parents=True, exist_ok=True)
    for tag, res, quality in _cells(cfg):
        base = _open_store(cfg, SystemConfig(tag, res, quality, 100,
                                             experiment_seed=cfg.experiment_seed))
        stores = {level: base if level == 100 else
                  _open_store(cfg, SystemConfig(tag, res, quality, level,
                                                experiment_seed=cfg.experiment_seed))
                  for level in cfg.grid.feature_levels}
        for op in cfg.grid.operating_points:
            threshold = calibrate_store(base, op)
            for level in cfg.grid.feature_levels:
                result, _, curve = evaluate_store(stores[level], threshold)
                rows.append(result_row(stores[level].config, op, result))
                name = f"{tag}_{res.lower()}_{quality}_f{level}_op{op:g}.csv"
                write_curve(curve, curve_dir / name)
                written.append(curve_dir / name)
    path = cfg.output_dir / "results.csv"
    write_results(rows, path)
    return [path] + written


COMMANDS = {
    "encode": cmd_encode,
    "synth": cmd_synth,
    "run": cmd_run,
    "calibrate": cmd_calibrate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iriscap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
        p.add_argument("--workers", type=int, help="override engine.workers")
        p.add_argument("--chunk-size", type=int, help="override engine.chunk_size")
        p.add_argument("--resume", action="store_true", help="continue existing score stores")
        p.add_argument("--out", type=Path, help="override output_dir")
        p.add_argument("--seed", type=int, help="override experiment_seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg.workers = args.workers
        if args.chunk_size is not None:
            cfg.chunk_size = args.chunk_size
        if args.out is not None:
            cfg.output_dir = args.out.resolve()
        if args.seed is not None:
            cfg.experiment_seed = args.seed
        if cfg.workers < 1 or cfg.chunk_size < 1:
            raise ConfigError("--workers and --chunk-size must be >= 1")
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.command](cfg, args)
        _write_run_manifest(cfg, args.command,
                            [str(Path(p).resolve().relative_to(cfg.output_dir))
                             if Path(p).resolve().is_relative_to(cfg.output_dir) else str(p)
                             for p in outputs])
    except (ConfigError, ConfigMismatchError) as exc:
        print(f"iriscap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ManifestError, MissingTemplateError, FormatError, TemplateError,
            IncompleteStoreError) as exc:
        print(f"iriscap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (StoreError, OSError, ValueError, RuntimeError) as exc:
        print(f"iriscap: compute failure: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
