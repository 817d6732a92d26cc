"""Joint camera/model optimization: task bundles, evaluation and the GA loop.

Each generation evaluates every new genome against a frozen copy of the
trainable models, possibly in parallel, then applies gradient steps to the
shared models in slot order, then breeds the next population. Elites keep
their evaluated fitness.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from camforge.camera import (CameraDesign, KAPPA_DAY, design_pose, gain_linear, intrinsics_of, render,
                             render_intrinsics, render_stereo)
from camforge.errors import EvaluationFailed
from camforge.noise import REFERENCE_MODEL, NoiseModel, generalize, synthesize
from camforge.optimize.fitness import Lambdas, fitness_mono, fitness_stereo
from camforge.optimize.ga import GAConfig, step_generation
from camforge.optimize.space import Genome, ParamSpace, decode, genome_fields, init_population, sample_genome
from camforge.rng import derive_rng
from camforge.scene import AgentPath, SceneInstance
from camforge.tasks import detection as det
from camforge.tasks.features import detect_corners, match_and_ransac
from camforge.tasks.obstacles import ObstacleReport, visible_in
from camforge.tasks.stereo import (DisparityRefiner, RefinerBatch, block_match, depth_metrics, predicted_depth,
                                   refiner_batch)

log = logging.getLogger("camforge.optimize")


@dataclass(frozen=True)
class RenderSettings:
    scale: float = 0.16
    max_size: tuple[int, int] = (160, 120)
    kappa: float = KAPPA_DAY


@dataclass(frozen=True)
class TrainSettings:
    pretrain_designs: int = 4
    pretrain_steps: int = 200
    steps_per_genome: int = 20
    refiner_lr: float = 0.05
    detector_lr: float = 5.0


@dataclass(frozen=True)
class Evaluation:
    fitness: float
    metrics: dict
    train_data: object = None


def noise_for(design: CameraDesign, base: NoiseModel) -> NoiseModel:
    return generalize(base, gain_linear(design.gain_db), design.pixel_area_um2)


# ---------------------------------------------------------------- stereo


@dataclass
class StereoDepthTask:
    """Depth from a rectified pair via block matching and the refiner."""
    scene: SceneInstance
    path: AgentPath
    frame_steps: tuple[int, ...]
    render: RenderSettings = RenderSettings()
    noise: NoiseModel = REFERENCE_MODEL
    d_max_native: float = 192.0
    window: int = 7
    max_depth_m: float = 1000.0
    metric_names: tuple = ("avg_log_error", "rmse_m", "n_pixels")

    def new_models(self) -> dict:
        return {"refiner": DisparityRefiner()}

    def d_max_px(self, design: CameraDesign) -> int:
        native = intrinsics_of(design)
        k = render_intrinsics(design, self.render.scale, self.render.max_size)
        return max(1, int(round(self.d_max_native * k.width / native.width)))

    def evaluate(self, design: CameraDesign, models: dict, seed_keys: tuple) -> Evaluation:
        refiner = models["refiner"]
        noise = noise_for(design, self.noise)
        d_max = self.d_max_px(design)
        preds, gts, batches = [], [], []
        for fi, step in enumerate(self.frame_steps):
            s = self.path.steps[step]
            pose = design_pose(design, s.x, s.z, s.yaw_deg, s.camera_height_m)
            pair = render_stereo(self.scene, pose, design, d_max=d_max, scale=self.render.scale,
                                 max_size=self.render.max_size, kappa=self.render.kappa)
            rng = derive_rng(*seed_keys, fi, "noise")
            left = synthesize(pair.left.exposed, noise, rng)
            right = synthesize(pair.right.exposed, noise, rng)
            raw = block_match(left, right, d_max, self.window)
            refined = refiner.apply(raw)
            k = pair.left.intrinsics
            preds.append(predicted_depth(refined, k.f_px, design.baseline_m, self.max_depth_m).ravel())
            gts.append(pair.left.depth.ravel())
            batches.append(refiner_batch(raw, pair.gt_disparity))
        m = depth_metrics(np.concatenate(preds), np.concatenate(gts))
        metrics = {"avg_log_error": m.avg_log_error, "rmse_m": m.rmse_m, "n_pixels": m.n_pixels}
        return Evaluation(fitness_stereo(m), metrics, RefinerBatch.concat(batches))

    def train(self, models: dict, data, steps: int, settings: TrainSettings) -> None:
        if data is None or data.n == 0:
            return
        for _ in range(steps):
            models["refiner"].train_step(data, settings.refiner_lr)


# ---------------------------------------------------------------- mono


@dataclass
class MonoTask:
    """Feature matching, object detection and obstacle visibility along a walk."""
    scene: SceneInstance
    path: AgentPath
    frame_steps: tuple[int, ...]
    render: RenderSettings = RenderSettings()
    noise: NoiseModel = REFERENCE_MODEL
    lambdas: Lambdas = Lambdas()
    inlier_px: float = 2.0
    ransac_iters: int = 500
    ratio: float = 0.8
    max_features: int = 2000
    min_obstacle_px: int = 25
    metric_names: tuple = ("n_inlier", "n_total", "inlier_ratio", "ap", "o_seen", "o_total")

    def new_models(self) -> dict:
        return {"detector": det.DetectorModel.zeros()}

    def _frame(self, design, step, **kw):
        s = self.path.steps[step]
        pose = design_pose(design, s.x, s.z, s.yaw_deg, s.camera_height_m)
        return render(self.scene, pose, design, scale=self.render.scale, max_size=self.render.max_size,
                      kappa=self.render.kappa, **kw)

    def obstacles(self, design: CameraDesign) -> ObstacleReport:
        seen = 0
        events = self.path.crossing_events()
        for oid, _, approach in events:
            for step in approach:
                if visible_in(self._frame(design, step, shade=False).instance, oid, self.min_obstacle_px):
                    seen += 1
                    break
        return ObstacleReport(len(events), seen)

    def evaluate(self, design: CameraDesign, models: dict, seed_keys: tuple) -> Evaluation:
        detector = models["detector"]
        noise = noise_for(design, self.noise)
        n_inlier = n_total = 0
        dets, gts, batches = [], [], []
        for fi, step in enumerate(self.frame_steps):
            rng = derive_rng(*seed_keys, fi, "noise")
            a = self._frame(design, step)
            b = self._frame(design, min(step + 1, len(self.path) - 1))
            img_a = synthesize(a.exposed, noise, rng)
            img_b = synthesize(b.exposed, noise, rng)
            fa = detect_corners(img_a, self.max_features)
            fb = detect_corners(img_b, self.max_features)
            mr = match_and_ransac(fa, fb, inlier_px=self.inlier_px, iterations=self.ransac_iters,
                                  ratio=self.ratio, seed=step)
            n_inlier += mr.n_inlier
            n_total += mr.n_total
            boxes = det.gt_boxes(a.instance, a.semantic)
            dets.append(det.detector_infer(detector, img_a))
            gts.append(boxes)
            batches.append(det.detector_batch(img_a, boxes))
        ap = det.average_precision(dets, gts)
        obs = self.obstacles(design)
        mean_inlier = n_inlier / len(self.frame_steps)
        ratio = n_inlier / n_total if n_total else 0.0
        f = fitness_mono(mean_inlier, ratio, ap, obs.ratio, self.lambdas)
        metrics = {"n_inlier": mean_inlier, "n_total": n_total / len(self.frame_steps), "inlier_ratio": ratio,
                   "ap": ap, "o_seen": obs.n_seen, "o_total": obs.n_total}
        return Evaluation(f, metrics, det.DetectorBatch.concat(batches))

    def train(self, models: dict, data, steps: int, settings: TrainSettings) -> None:
        if data is None or data.n == 0:
            return
        for _ in range(steps):
            det.detector_train_step(models["detector"], data, settings.detector_lr)


# ---------------------------------------------------------------- loop


@dataclass
class RunResult:
    history: list[dict]
    best_genome: Genome
    best_fitness: float
    best_metrics: dict
    models: dict
    space: ParamSpace = None
    failed: EvaluationFailed | None = None
    population: list = field(default_factory=list)


def _copy_models(models: dict) -> dict:
    return {k: v.copy() for k, v in models.items()}


def evaluate(task, genome: Genome, space: ParamSpace, models: dict, seed_keys: tuple,
             genome_id=None) -> Evaluation:
    """Fitness of one genome; any failure is re-raised as EvaluationFailed."""
    try:
        return task.evaluate(decode(genome, space), models, seed_keys)
    except Exception as exc:  # noqa: BLE001 - wrapped with the genome id
        raise EvaluationFailed(genome_id, exc) from exc


def pretrain(task, space: ParamSpace, models: dict, config: GAConfig, settings: TrainSettings) -> None:
    """Fit the trainable heads on random designs before the search starts."""
    if settings.pretrain_designs <= 0 or settings.pretrain_steps <= 0:
        return
    rng = derive_rng(config.master_seed, "pretrain")
    data = []
    for i in range(settings.pretrain_designs):
        g = sample_genome(space, rng)
        ev = evaluate(task, g, space, models, (config.master_seed, "pretrain", i), ("pretrain", i))
        if ev.train_data is not None and ev.train_data.n:
            data.append(ev.train_data)
    if not data:
        return
    batch = type(data[0]).concat(data)
    task.train(models, batch, settings.pretrain_steps, settings)


def _row(generation, slot, fresh, ev: Evaluation, genome, space, metric_names):
    row = {"generation": generation, "slot": slot, "fitness": ev.fitness, "evaluated": int(fresh)}
    for k in metric_names:
        row[k] = ev.metrics[k]
    row.update(genome_fields(genome, space))
    return row


def run_joint(task, space: ParamSpace, config: GAConfig, settings: TrainSettings = TrainSettings(),
              frozen: bool = False, workers: int = 1, on_generation=None) -> RunResult:
    """Run the search. ``frozen`` skips per-generation training after pretraining.

    On an evaluation failure the partial history is returned with ``failed``
    set rather than raised, so callers can persist it.
    """
    models = task.new_models()
    pretrain(task, space, models, config, settings)
    pop = init_population(space, config.pop_size, derive_rng(config.master_seed, "init"), config.init_preset)
    carried: list[Evaluation | None] = [None] * config.pop_size
    history: list[dict] = []
    best = (-np.inf, None, None)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for gen in range(config.n_generations):
            snapshot = _copy_models(models)
            todo = [s for s in range(config.pop_size) if carried[s] is None]

            def run(slot, gen=gen, snapshot=snapshot):
                return evaluate(task, pop[slot], space, snapshot, (config.master_seed, gen, slot), (gen, slot))

            try:
                done = list(pool.map(run, todo)) if pool else [run(s) for s in todo]
            except EvaluationFailed as exc:
                log.error("generation %d: %s", gen, exc)
                f, g, m = best
                return RunResult(history, g, f, m, models, space, exc, pop)
            evals = list(carried)
            for s, ev in zip(todo, done):
                evals[s] = ev
            for s in range(config.pop_size):
                history.append(_row(gen, s, carried[s] is None, evals[s], pop[s], space, task.metric_names))
                if evals[s].fitness > best[0]:
                    best = (evals[s].fitness, pop[s], evals[s].metrics)
            log.info("generation %d best %.6g", gen, best[0])
            if not frozen:
                for s in range(config.pop_size):
                    task.train(models, evals[s].train_data, settings.steps_per_genome, settings)
            if on_generation is not None:
                on_generation(gen, history)
            if gen + 1 < config.n_generations:
                fit = [e.fitness for e in evals]
                pop, source = step_generation(pop, fit, space, config, gen)
                carried = [evals[src] if src >= 0 else None for src in source]
    finally:
        if pool:
            pool.shutdown()
    f, g, m = best
    return RunResult(history, g, f, m, models, space, None, pop)


def best_history(history: list[dict]) -> list[float]:
    """Best fitness seen up to and including each generation."""
    out, best = [], -np.inf
    gens = sorted({r["generation"] for r in history})
    for g in gens:
        best = max([best] + [r["fitness"] for r in history if r["generation"] == g])
        out.append(best)
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def history_csv(history: list[dict]) -> str:
    if not history:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(history[0].keys())
    w.writerow(keys)
    for r in history:
        w.writerow([_fmt(r.get(k, "")) for k in keys])
    return buf.getvalue()


def write_history(history: list[dict], path) -> None:
    Path(path).write_text(history_csv(history))


def read_history(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out = {}
            for k, v in r.items():
                try:
                    out[k] = int(v)
                except ValueError:
                    try:
                        out[k] = float(v)
                    except ValueError:
                        out[k] = v
            rows.append(out)
    return rows


def write_key_values(values: dict, path) -> None:
    Path(path).write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in values.items()))


def read_key_values(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def model_values(models: dict) -> dict:
    """Flat key-value view of the trainable models."""
    out = {}
    if "refiner" in models:
        r = models["refiner"]
        out.update({"refiner.alpha": r.alpha, "refiner.beta": r.beta, "refiner.gamma": r.gamma,
                    "refiner.delta": r.delta, "refiner.steps": r.steps})
    if "detector" in models:
        d = models["detector"]
        out["detector.lr"] = d.lr
        out["detector.steps"] = d.steps
        for c in range(d.weights.shape[0]):
            out[f"detector.w{c + 1}"] = " ".join(repr(float(x)) for x in d.weights[c])
    return out


def models_from_values(values: dict) -> dict:
    models = {}
    if "refiner.alpha" in values:
        models["refiner"] = DisparityRefiner(float(values["refiner.alpha"]), float(values["refiner.beta"]),
                                             float(values["refiner.gamma"]), float(values["refiner.delta"]),
                                             int(values.get("refiner.steps", 0)))
    if "detector.w1" in values:
        w = np.array([[float(x) for x in str(values[f"detector.w{c + 1}"]).split()] for c in range(det.N_CLASSES)])
        models["detector"] = det.DetectorModel(w, float(values.get("detector.lr", 5.0)),
                                               int(values.get("detector.steps", 0)))
    return models


def select_frames(path_len: int, n: int, margin: int = 1) -> tuple[int, ...]:
    """``n`` evenly spaced steps, leaving room for the following frame."""
    last = max(0, path_len - 1 - margin)
    return tuple(int(round(x)) for x in np.linspace(0, last, n))

