"""End-to-end acceptance checks, one test per criterion.

The search-based criteria (5 to 8) run the full presets and take a while;
their runs are shared through module-scoped fixtures.
"""
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from camforge.camera import CameraDesign, Pose, disparity_to_depth, fov_to_focal, render_stereo
from camforge.catalog import load_catalog, snap, snap_index
from camforge.cli import main
from camforge.config import build_space, build_task, emit_config, mono_preset, stereo_preset
from camforge.noise import REFERENCE_MODEL, calibrate, generalize, level_statistics, synthesize
from camforge.optimize.experiment import best_history, history_csv, run_joint
from camforge.optimize.fitness import fitness_mono
from camforge.optimize.space import genome_from_fields, within_bounds
from camforge.tasks.detection import (DetectorBatch, DetectorModel, Detection, N_CLASSES, N_FEATURES,
                                      average_precision, detector_batch, detector_loss_and_grad,
                                      detector_train_step, gt_boxes)
from camforge.tasks.stereo import block_match, depth_metrics

SEEDS = range(5)
G0, A0 = REFERENCE_MODEL.g0_lin, REFERENCE_MODEL.pixel_area0_um2


def timed_run(cfg, frozen=False, workers=1, scheme=None):
    task, space = build_task(cfg), build_space(cfg, scheme)
    t = time.perf_counter()
    r = run_joint(task, space, cfg.ga, cfg.training, frozen=frozen, workers=workers)
    return r, space, time.perf_counter() - t


@pytest.fixture(scope="module")
def stereo_runs():
    return {(s, frozen): timed_run(stereo_preset(s), frozen) for s in SEEDS for frozen in (False, True)}


@pytest.fixture(scope="module")
def mono_runs():
    runs = {}
    for s in SEEDS:
        for scen in ("day", "night"):
            runs[scen, "quantized", s] = timed_run(mono_preset(scen, s, "quantized"))
        runs["day", "discrete", s] = timed_run(mono_preset("day", s, "discrete"))
    return runs


# ---------------------------------------------------------------- noise, catalog


def test_c01_noise_round_trip(acceptance):
    with acceptance(1, "noise round trip within 5% in < 10 s"):
        t = time.perf_counter()
        img = np.repeat(np.linspace(0.0, 1.0, 11), 100_000)
        labels = np.repeat(np.arange(11), 100_000)
        stats = level_statistics(synthesize(img, REFERENCE_MODEL, 0), labels)
        m = calibrate([(mu, var) for _, mu, var in stats], G0, A0)
        elapsed = time.perf_counter() - t
        assert abs(m.sigma_p_sq / 4e-4 - 1) <= 0.05, m
        assert abs(m.sigma_r_sq / 1e-5 - 1) <= 0.05, m
        assert elapsed < 10.0, elapsed


def test_c02_generalization(acceptance):
    with acceptance(2, "gain/pixel-area generalization"):
        m = generalize(REFERENCE_MODEL, 2 * G0, A0)
        assert m.sigma_p_sq == 2 * REFERENCE_MODEL.sigma_p_sq
        assert m.sigma_r_sq == 4 * REFERENCE_MODEL.sigma_r_sq
        out = synthesize(np.full(100_000, 0.5), m, 1)
        assert abs(out.var() / 4.4e-4 - 1) <= 0.10, out.var()
        by_area = generalize(REFERENCE_MODEL, G0, 4 * A0)
        by_gain = generalize(REFERENCE_MODEL, G0 / 4, A0)
        assert (by_area.sigma_p_sq, by_area.sigma_r_sq) == (by_gain.sigma_p_sq, by_gain.sigma_r_sq)


def test_c03_snapping(acceptance):
    with acceptance(3, "catalog snap equals brute force, idempotent, on-catalog"):
        cat = load_catalog()
        assert len(cat) == 43
        table = np.array([e.triplet for e in cat.entries])
        span = table.max(axis=0) - table.min(axis=0)
        rng = np.random.default_rng(0)
        queries = rng.uniform(table.min(axis=0) * 0.8, table.max(axis=0) * 1.2, size=(1000, 3))
        for normalized in (False, True):
            t = table / span if normalized else table
            for q in queries:
                qq = q / span if normalized else q
                expect = int(np.argmin(((t - qq) ** 2).sum(axis=1)))
                assert snap_index(cat, *q, normalized=normalized) == expect
                e = snap(cat, *q, normalized)
                assert e in cat.entries and snap(cat, *e.triplet, normalized) == e


# ---------------------------------------------------------------- stereo


def test_c04_stereo_oracle(acceptance, plane_scene):
    with acceptance(4, "stereo plane oracle and gt duality"):
        d = CameraDesign(focal_mm=fov_to_focal(50.0, 1.536), sensor_w_mm=1.536, sensor_h_mm=0.768, pixel_um=1.55,
                         baseline_m=0.3, n_cameras=2)
        pair = render_stereo(plane_scene, Pose((0.0, 0.0, 0.0)), d, scale=0.16, d_max=192 * 0.16)
        k = pair.left.intrinsics
        dm = block_match(pair.left.exposed, pair.right.exposed, int(round(192 * 0.16)), 5)
        ok = dm.valid & np.isfinite(pair.gt_disparity)
        assert ok.any()
        frac = np.mean(np.abs(dm.disparity[ok] - k.f_px * d.baseline_m / 10.0) <= 0.5)
        assert frac >= 0.95, frac
        seen = np.isfinite(pair.gt_disparity)
        z = disparity_to_depth(pair.gt_disparity, k.f_px, d.baseline_m)
        m = depth_metrics(z, np.where(seen, pair.left.depth, np.inf))
        assert m.avg_log_error <= 1e-6 and m.rmse_m <= 1e-6


# ---------------------------------------------------------------- search


def test_c05_ga_guarantees(acceptance, stereo_runs, mono_runs):
    with acceptance(5, "GA monotone best, bounds, CSV identical for 1 vs 8 workers"):
        for r, space, _ in list(stereo_runs.values()) + list(mono_runs.values()):
            b = best_history(r.history)
            assert all(y >= x for x, y in zip(b, b[1:]))
            assert all(within_bounds(genome_from_fields(h, space), space) for h in r.history)
        one = stereo_runs[0, False][0]
        many, _, _ = timed_run(stereo_preset(0), workers=8)
        assert history_csv(one.history) == history_csv(many.history)


def test_c06_stereo_trend(acceptance, stereo_runs):
    with acceptance(6, "stereo: narrow FOV, baseline > 0.5 m, joint >= frozen"):
        trend = joint_wins = 0
        for s in SEEDS:
            (joint, space, secs), (frozen, _, secs_f) = stereo_runs[s, False], stereo_runs[s, True]
            g = dict(zip((p.name for p in space.params), joint.best_genome.values))
            print(f"stereo seed {s}: hfov {g['hfov_deg']:.1f} b {g['baseline_m']:.2f} "
                  f"joint {joint.best_fitness:.4f} frozen {frozen.best_fitness:.4f} {secs:.0f}s")
            trend += abs(g["hfov_deg"] - 50.0) <= 10.0 and g["baseline_m"] > 0.5
            joint_wins += joint.best_fitness >= frozen.best_fitness
            assert max(secs, secs_f) <= 600.0
        assert trend >= 4, trend
        assert joint_wins >= 4, joint_wins


def _pixel(r, space):
    p = space.sensor_param()
    return p.catalog[r.best_genome.values[space.params.index(p)].index].pixel_um


def test_c07_day_night_trend(acceptance, mono_runs):
    with acceptance(7, "mono: median pixel size larger at night"):
        px = {scen: [_pixel(*mono_runs[scen, "quantized", s][:2]) for s in SEEDS] for scen in ("day", "night")}
        secs = {scen: [mono_runs[scen, "quantized", s][2] for s in SEEDS] for scen in ("day", "night")}
        print(f"pixel um day {px['day']} night {px['night']}")
        print(f"seconds day {np.round(secs['day'])} night {np.round(secs['night'])}")
        assert np.median(px["night"]) > np.median(px["day"])
        assert max(secs["day"] + secs["night"]) <= 900.0


def test_c08_scheme_comparison(acceptance, mono_runs):
    with acceptance(8, "quantized >= fully discrete on >= 3 of 5 seeds"):
        q = [mono_runs["day", "quantized", s][0].best_fitness for s in SEEDS]
        d = [mono_runs["day", "discrete", s][0].best_fitness for s in SEEDS]
        print(f"quantized {np.round(q, 4)} discrete {np.round(d, 4)}")
        assert sum(a >= b for a, b in zip(q, d)) >= 3


# ---------------------------------------------------------------- fitness, detector


def test_c09_fitness_composition(acceptance):
    with acceptance(9, "fitness worked case is 2.06"):
        assert fitness_mono(200, 0.12, 0.5, 1.0) == 2.06


def test_c10_detector_gradient(acceptance, indoor_scene):
    from camforge.camera import design_pose, render
    from camforge.scene import plan_path
    with acceptance(10, "detector gradient check and 200 steps reduce loss"):
        d = CameraDesign(focal_mm=2.0, sensor_w_mm=3.2, sensor_h_mm=2.4, pixel_um=20.0, pitch_deg=-10.0)
        batch = None
        for st in plan_path(indoor_scene, 60, 3).steps:
            f = render(indoor_scene, design_pose(d, st.x, st.z, st.yaw_deg, st.camera_height_m), d)
            batch = detector_batch(f.exposed, gt_boxes(f.instance, f.semantic))
            if batch.labels.any():
                break
        rng = np.random.default_rng(0)
        for _ in range(10):
            pick = rng.choice(batch.n, size=10, replace=False)
            sub = DetectorBatch(batch.features[pick], batch.labels[pick])
            m = DetectorModel(rng.normal(0, 0.5, (N_CLASSES, N_FEATURES)))
            _, g = detector_loss_and_grad(m, sub)
            fd = np.zeros_like(g)
            for c in range(N_CLASSES):
                for j in range(N_FEATURES):
                    w = m.weights.copy()
                    w[c, j] += 1e-6
                    lp, _ = detector_loss_and_grad(DetectorModel(w), sub)
                    w[c, j] -= 2e-6
                    lm, _ = detector_loss_and_grad(DetectorModel(w), sub)
                    fd[c, j] = (lp - lm) / 2e-6
            assert np.max(np.abs(g - fd)) <= 1e-5 * np.max(np.abs(fd))
        m = DetectorModel.zeros()
        first = detector_train_step(m, batch)
        for _ in range(199):
            last = detector_train_step(m, batch)
        assert last < first


def test_c11_average_precision(acceptance):
    def det(box, score, cls=1):
        return Detection(tuple(float(v) for v in box), cls, score)

    def shifted(iou):
        s = 10 * (1 - iou) / (1 + iou)
        return (10 + s, 10, 20 + s, 20)

    with acceptance(11, "AP hand cases and monotone-rescale invariance"):
        gt = [np.array([[10, 10, 20, 20, 1]])]
        assert average_precision([[det(shifted(0.6), 0.9)]], gt) == 1.0
        assert average_precision([[det(shifted(0.2), 0.9), det(shifted(0.7), 0.8)]], gt) == 0.5
        assert average_precision([[]], gt) == 0.0
        rng = np.random.default_rng(0)
        gts = [np.array([[10, 10, 20, 20, 1], [25, 5, 40, 30, 2]])]
        for _ in range(20):
            dets = [det((x, y, x + 12, y + 12), s, int(c)) for x, y, s, c in
                    zip(*rng.uniform(0, 40, (2, 8)), rng.uniform(0.01, 1, 8), rng.integers(1, 3, 8))]
            for f in (lambda s: s ** 3, lambda s: 5 * s - 2, math.log):
                assert average_precision([dets], gts) == average_precision(
                    [[det(d.box, f(d.score), d.class_id) for d in dets]], gts)


# ---------------------------------------------------------------- cli


def _tiny(cfg, out):
    return replace(cfg, output_dir=str(out), scene=replace(cfg.scene, path_steps=20),
                   render=replace(cfg.render, scale=0.04, max_width_px=160, max_height_px=120),
                   ga=replace(cfg.ga, pop_size=3, n_elites=1, n_parents=2, n_generations=2, frames_per_eval=1),
                   training=replace(cfg.training, pretrain_designs=1, pretrain_steps=3, steps_per_genome=2))


def _snapshot(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(Path(d).rglob("*")) if p.is_file()}


def test_c12_cli_determinism(acceptance, tmp_path, capsys):
    with acceptance(12, "every CLI command is bit-identical on rerun"):
        samples = tmp_path / "samples.csv"
        samples.write_text("mean,variance\n0.1,5e-05\n0.4,0.00017\n0.7,0.00029\n")
        for name, cfg in (("stereo", stereo_preset(0)), ("mono", mono_preset("night", 0))):
            ini = tmp_path / f"{name}.ini"
            ini.write_text(emit_config(_tiny(cfg, tmp_path / "unused")))
            outs = []
            for rerun in range(2):
                root = tmp_path / f"{name}{rerun}"
                run = root / "run"
                cmds = [
                    ["design", "--config", str(ini), "--out", str(run)],
                    ["eval", "--config", str(ini), "--genome", str(run / "best_genome.txt"),
                     "--models", str(run / "models.txt"), "--out", str(root / "eval"), "--ppm"],
                    ["report", str(run), "--out", str(root / "report.svg")],
                    ["calibrate", "--samples", str(samples), "--out", str(root / "model.txt")],
                    ["validate-noise", "--out", str(root / "vn")],
                    ["catalog", "list"],
                    ["catalog", "snap", "5.0", "3.7", "2.0", "--normalized"],
                ]
                stdout = []
                for c in cmds:
                    assert main(c) == 0, c
                    stdout.append(capsys.readouterr().out.replace(str(root), "<root>"))
                snap_ = _snapshot(root)
                snap_.pop("run/resolved_config.ini")  # records the output directory
                outs.append((snap_, stdout))
            assert outs[0] == outs[1]
