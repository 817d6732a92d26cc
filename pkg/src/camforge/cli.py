"""Command-line entry point: ``camforge <command> [options]``.

Exit codes: 0 ok, 2 configuration or input error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from camforge import config as cfgmod
from camforge.camera import CameraDesign, KAPPA_DAY, MID_GREY_ALBEDO, Pose, design_pose, render, render_stereo
from camforge.catalog import format_catalog, load_catalog, snap_index
from camforge.errors import CamforgeError, ConfigError, EmptyCatalog, EvaluationFailed, ParseError
from camforge.export import label_colors, write_depth_pgm, write_label_pgm, write_pgm, write_ppm
from camforge.noise import REFERENCE_MODEL, calibrate, level_statistics, load_model, read_samples_csv, save_model, \
    synthesize, variance_at
from camforge.optimize.experiment import (best_history, evaluate, models_from_values, read_history,
                                          read_key_values, run_joint, write_history, write_key_values,
                                          model_values)
from camforge.optimize.space import decode, genome_fields, genome_from_fields
from camforge.scene import make_colorbar_target
from camforge.svg import Series, plot

log = logging.getLogger("camforge")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
INPUT_ERRORS = (ConfigError, ParseError, EmptyCatalog, FileNotFoundError)


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("camforge.configs").joinpath(name)))


def _resolve_config_path(arg: str) -> str:
    if Path(arg).is_file():
        return arg
    name = arg if arg.endswith(".ini") else arg + ".ini"
    candidate = bundled_config(name)
    return str(candidate) if candidate.is_file() else arg


def _load_cfg(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load_config(_resolve_config_path(args.config))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, master_seed=args.seed, ga=replace(cfg.ga, master_seed=args.seed))
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    if getattr(args, "frozen", False):
        cfg = replace(cfg, frozen=True)
    if getattr(args, "scheme", None):
        cfg = replace(cfg, params=tuple(replace(p, scheme=args.scheme) if p.kind == "sensor" else p
                                        for p in cfg.params))
    cfgmod.validate(cfg)
    return cfg


def _fitness_svg(curves, title: str) -> str:
    series = [Series(label, tuple(range(len(ys))), tuple(ys), "both") for label, ys in curves]
    return plot(series, title, "generation", "best fitness")


# ---------------------------------------------------------------- commands


def cmd_design(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.ini").write_text(cfgmod.emit_config(cfg))
    task = cfgmod.build_task(cfg)
    space = cfgmod.build_space(cfg)
    result = run_joint(task, space, cfg.ga, cfg.training, frozen=cfg.frozen, workers=cfg.workers)
    write_history(result.history, out / "history.csv")
    if result.best_genome is not None:
        best = {"fitness": result.best_fitness, **genome_fields(result.best_genome, space)}
        best.update({f"metric.{k}": v for k, v in result.best_metrics.items()})
        write_key_values(best, out / "best_genome.txt")
    write_key_values(model_values(result.models), out / "models.txt")
    label = "frozen" if cfg.frozen else "joint"
    (out / "fitness.svg").write_text(_fitness_svg([(label, best_history(result.history))],
                                                  f"{cfg.experiment} ({cfg.scenario})"))
    if result.failed is not None:
        print(f"error: {result.failed}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"best fitness {result.best_fitness!r}")
    for k, v in genome_fields(result.best_genome, space).items():
        print(f"  {k} = {v}")
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    space = cfgmod.build_space(cfg)
    try:
        fields = read_key_values(args.genome)
        genome = genome_from_fields(fields, space)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad genome file {args.genome}: {exc!r}") from None
    task = cfgmod.build_task(cfg)
    models = task.new_models()
    if args.models:
        models.update(models_from_values(read_key_values(args.models)))
    ev = evaluate(task, genome, space, models, (cfg.master_seed, "eval"), "eval")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    row = {"fitness": ev.fitness, **ev.metrics, **genome_fields(genome, space)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(row.keys())
    w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
    (out / "metrics.csv").write_text(buf.getvalue())
    print(f"fitness {ev.fitness!r}")
    for k, v in ev.metrics.items():
        print(f"  {k} = {v}")
    if args.ppm:
        _debug_images(task, decode(genome, space), out)
    return EXIT_OK


def _debug_images(task, design: CameraDesign, out: Path) -> None:
    for fi, step in enumerate(task.frame_steps):
        s = task.path.steps[step]
        pose = design_pose(design, s.x, s.z, s.yaw_deg, s.camera_height_m)
        r = task.render
        if design.n_cameras == 2:
            pair = render_stereo(task.scene, pose, design, scale=r.scale, max_size=r.max_size, kappa=r.kappa)
            write_ppm(pair.left.exposed, out / f"frame{fi}_left.ppm")
            write_ppm(pair.right.exposed, out / f"frame{fi}_right.ppm")
            d = np.nan_to_num(pair.gt_disparity, nan=0.0)
            write_pgm(d / max(float(d.max()), 1e-9), out / f"frame{fi}_gt_disparity.pgm")
        else:
            f = render(task.scene, pose, design, scale=r.scale, max_size=r.max_size, kappa=r.kappa)
            write_ppm(f.exposed, out / f"frame{fi}.ppm")
            write_ppm(label_colors(f.instance), out / f"frame{fi}_instances.ppm")
            write_depth_pgm(f.depth, out / f"frame{fi}_depth.pgm")
            write_label_pgm(f.semantic, out / f"frame{fi}_semantic.pgm")


def cmd_calibrate(args) -> int:
    samples = read_samples_csv(args.samples)
    model = calibrate(samples, 10.0 ** (args.g0_db / 20.0), args.pixel_area)
    save_model(model, args.out)
    print(f"sigma_p_sq = {model.sigma_p_sq!r}")
    print(f"sigma_r_sq = {model.sigma_r_sq!r}")
    if model.clamped:
        print("warning: a negative coefficient was clamped to 0", file=sys.stderr)
    return EXIT_OK


def colorbar_frame(n_levels: int, size=(440, 200)):
    """Exposed colorbar image and bar labels; bar k has mean level k/(n-1)."""
    target = make_colorbar_target(n_levels)
    w_mm = 1.0
    # the target (0.44 x 0.2 m at 0.5 m) fills the frame
    design = CameraDesign(focal_mm=w_mm * 0.5 / 0.44 * 0.98, sensor_w_mm=w_mm, sensor_h_mm=w_mm * size[1] / size[0],
                          pixel_um=1000.0 * w_mm / size[0], gain_db=15.0, exposure_ms=30.0)
    frame = render(target, Pose((0.0, 0.0, 0.0)), design, kappa=2.0 * KAPPA_DAY * MID_GREY_ALBEDO)
    return frame.exposed, frame.instance


def cmd_validate_noise(args) -> int:
    model = load_model(args.model) if args.model else REFERENCE_MODEL
    image, labels = colorbar_frame(args.levels)
    noisy = synthesize(image, model, args.seed)
    clean = {lab: m for lab, m, _ in level_statistics(image, labels)}
    rows = []
    for lab, mean, var in level_statistics(noisy, labels):
        if lab == 0:
            continue
        rows.append((lab, clean[lab], mean, var, float(variance_at(model, clean[lab]))))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "clean_mean", "mean", "empirical_variance", "model_variance"])
    for r in rows:
        w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
    (out / "noise_validation.csv").write_text(buf.getvalue())
    svg = plot([Series("model", tuple(r[1] for r in rows), tuple(r[4] for r in rows), "line"),
                Series("empirical", tuple(r[2] for r in rows), tuple(r[3] for r in rows), "points")],
               "pixel variance vs mean level", "mean pixel value", "variance")
    (out / "noise_validation.svg").write_text(svg)
    for r in rows:
        print(f"level {r[0]:2d}  mean {r[2]:.4f}  empirical {r[3]:.3e}  model {r[4]:.3e}")
    return EXIT_OK


def cmd_catalog(args) -> int:
    catalog = load_catalog(args.catalog)
    if args.action == "list":
        sys.stdout.write(format_catalog(catalog))
        return EXIT_OK
    if args.values is None or len(args.values) != 3:
        raise ConfigError("catalog snap needs three values: sensor_w_mm sensor_h_mm pixel_um")
    e = catalog[snap_index(catalog, *args.values, normalized=args.normalized)]
    print(f"{e.id},{e.manufacturer},{e.sensor_w_mm:g},{e.sensor_h_mm:g},{e.pixel_um:g}")
    return EXIT_OK


def cmd_report(args) -> int:
    curves = []
    for run in args.runs:
        p = Path(run)
        hist = p / "history.csv" if p.is_dir() else p
        if not hist.is_file():
            raise ConfigError(f"history file not found: {hist}")
        rows = read_history(hist)
        curve = best_history(rows)
        label = p.name if p.is_dir() else p.stem
        curves.append((label, curve))
        print(f"{label}: {len(curve)} generations, best {curve[-1]!r}" if curve else f"{label}: empty")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_fitness_svg(curves, "best fitness per generation"))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camforge", description="Task-specific camera design by joint search.")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp, out_default=None):
        sp.add_argument("--config", required=True, help="INI file or bundled name (stereo_demo, mono_day, ...)")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--workers", type=int, help="parallel evaluations (results do not depend on it)")
        sp.add_argument("--out", help="override output_dir")
        sp.add_argument("--frozen", action="store_true", help="no model training during the search")
        sp.add_argument("--scheme", choices=("discrete", "quantized"), help="sensor parametrization")

    sp = sub.add_parser("design", help="run the joint camera/model search")
    run_flags(sp)
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("eval", help="evaluate one fixed design")
    run_flags(sp)
    sp.add_argument("--genome", required=True, help="key = value file (e.g. best_genome.txt)")
    sp.add_argument("--models", help="trained models file (models.txt); default untrained")
    sp.add_argument("--ppm", action="store_true", help="also write debug PPM/PGM frames")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("calibrate", help="fit the affine noise model to (mean, variance) samples")
    sp.add_argument("--samples", required=True, help="CSV with header mean,variance")
    sp.add_argument("--g0-db", type=float, default=15.0, help="gain of the samples in dB")
    sp.add_argument("--pixel-area", type=float, default=1.55 ** 2, help="pixel area of the samples in um^2")
    sp.add_argument("--out", required=True, help="noise model file to write")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("validate-noise", help="colorbar check of empirical vs model variance")
    sp.add_argument("--model", help="noise model file; default the reference model")
    sp.add_argument("--levels", type=int, default=11)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_validate_noise)

    sp = sub.add_parser("catalog", help="list the sensor catalog or snap a triplet to it")
    sp.add_argument("action", choices=("list", "snap"))
    sp.add_argument("values", nargs="*", type=float, help="sensor_w_mm sensor_h_mm pixel_um (snap)")
    sp.add_argument("--catalog", help="catalog CSV; default the bundled one")
    sp.add_argument("--normalized", action="store_true", help="range-normalized distance")
    sp.set_defaults(func=cmd_catalog)

    sp = sub.add_parser("report", help="overlay best-fitness curves of finished runs")
    sp.add_argument("runs", nargs="+", help="run directories or history CSV files")
    sp.add_argument("--out", required=True, help="SVG file to write")
    sp.set_defaults(func=cmd_report)
    return p


def _setup_logging() -> None:
    level = os.environ.get("CAMFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        msg = f"{exc.strerror}: {exc.filename}" if isinstance(exc, FileNotFoundError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvaluationFailed, CamforgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
