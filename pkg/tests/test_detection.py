import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camforge.camera import CameraDesign, design_pose, render
from camforge.errors import EmptyBatch
from camforge.scene import plan_path
from camforge.tasks.detection import (N_CLASSES, N_FEATURES, Detection, DetectorBatch, DetectorModel,
                                      average_precision, class_weights, detector_batch, detector_infer,
                                      detector_loss_and_grad, detector_train_step, gt_boxes, iou_matrix, windows)

GT = np.array([[10, 10, 20, 20, 1]])


def det(box, score, cls=1):
    return Detection(tuple(float(v) for v in box), cls, score)


def box_with_iou(iou):
    # same height, shifted right so that overlap / union = iou for a 10 x 10 gt at (10, 10)
    s = 10 * (1 - iou) / (1 + iou)
    return (10 + s, 10, 20 + s, 20)


@pytest.fixture(scope="module")
def frame(indoor_scene):
    path = plan_path(indoor_scene, 60, 3)
    d = CameraDesign(focal_mm=2.0, sensor_w_mm=3.2, sensor_h_mm=2.4, pixel_um=20.0, pitch_deg=-10.0)
    for s in path.steps:
        f = render(indoor_scene, design_pose(d, s.x, s.z, s.yaw_deg, s.camera_height_m), d)
        if detector_batch(f.exposed, gt_boxes(f.instance, f.semantic), 0).n:
            return f
    raise AssertionError("no frame with a window on a visible object")


def test_ap_hand_cases():
    assert average_precision([[det(box_with_iou(0.6), 0.9)]], [GT]) == pytest.approx(1.0)
    dets = [det(box_with_iou(0.2), 0.9), det(box_with_iou(0.7), 0.8)]
    assert average_precision([dets], [GT]) == pytest.approx(0.5)
    assert average_precision([[]], [GT]) == 0.0
    assert average_precision([[det((0, 0, 5, 5), 0.9)]], [np.zeros((0, 5))]) == 0.0


def test_ap_each_gt_matched_once():
    dets = [det((10, 10, 20, 20), 0.9), det((10, 10, 20, 20), 0.8)]
    # precision 1 at recall 1 from the first detection; the duplicate is a false positive after it
    assert average_precision([dets], [GT]) == pytest.approx(1.0)
    two = np.array([[10, 10, 20, 20, 1], [40, 40, 50, 50, 1]])
    assert average_precision([dets], [two]) == pytest.approx(0.5)


def test_ap_macro_average_over_classes():
    gts = np.array([[10, 10, 20, 20, 1], [40, 40, 50, 50, 2]])
    dets = [det((10, 10, 20, 20), 0.9, 1), det((0, 0, 3, 3), 0.9, 2)]
    assert average_precision([dets], [gts]) == pytest.approx(0.5)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(0, 40), st.floats(0, 40), st.floats(0.01, 1.0)), min_size=1, max_size=12),
       st.sampled_from([lambda s: s ** 3, lambda s: 2 * s + 1, lambda s: math.log(s), lambda s: -1 / s]))
def test_ap_invariant_to_monotone_rescale(raw, f):
    gts = [np.array([[10, 10, 20, 20, 1], [25, 5, 40, 30, 1]])]
    dets = [det((x, y, x + 12, y + 12), s) for x, y, s in raw]
    rescaled = [det(d.box, f(d.score)) for d in dets]
    assert average_precision([dets], gts) == average_precision([rescaled], gts)


def test_iou_matrix():
    a = np.array([[0, 0, 10, 10]])
    b = np.array([[0, 0, 10, 10], [5, 0, 15, 10], [20, 20, 30, 30]])
    assert iou_matrix(a, b)[0].tolist() == pytest.approx([1.0, 1 / 3, 0.0])


def test_windows_cover_several_scales():
    w = windows(120, 160)
    heights = np.unique(w[:, 3] - w[:, 1])
    assert len(heights) >= 3
    assert w[:, 0].min() >= 0 and w[:, 2].max() <= 160 and w[:, 3].max() <= 120


def test_zero_model(frame):
    m = DetectorModel.zeros()
    batch = detector_batch(frame.exposed, gt_boxes(frame.instance, frame.semantic))
    loss, _ = detector_loss_and_grad(m, batch)
    assert loss == pytest.approx(math.log(2), rel=1e-12)
    assert all(d.score == 0.5 for d in detector_infer(m, frame.exposed))


def test_model_invariants():
    with pytest.raises(ValueError):
        DetectorModel(np.zeros((N_CLASSES, N_FEATURES + 1)))
    with pytest.raises(ValueError):
        DetectorModel(np.full((N_CLASSES, N_FEATURES), np.nan))
    with pytest.raises(EmptyBatch):
        detector_loss_and_grad(DetectorModel.zeros(), DetectorBatch(np.zeros((0, N_FEATURES)), np.zeros((0, N_CLASSES))))


def test_batch_keeps_every_positive(frame):
    boxes = gt_boxes(frame.instance, frame.semantic)
    b = detector_batch(frame.exposed, boxes, max_negatives=50)
    full = detector_batch(frame.exposed, boxes, max_negatives=10 ** 9)
    assert b.labels.sum() == full.labels.sum() > 0
    assert (~b.labels.any(axis=1)).sum() == 50


def test_class_weights_balance():
    y = np.array([[1, 0], [0, 0], [0, 0], [0, 0]], dtype=float)
    w = class_weights(y)
    assert w[0, 0] == 3.0 and w[1, 0] == 1.0 and np.all(w[:, 1] == 1.0)


def _gradient_check(seed, frame):
    rng = np.random.default_rng(seed)
    batch = detector_batch(frame.exposed, gt_boxes(frame.instance, frame.semantic))
    pick = rng.choice(batch.n, size=10, replace=False)
    sub = DetectorBatch(batch.features[pick], batch.labels[pick])
    m = DetectorModel(rng.normal(0, 0.5, (N_CLASSES, N_FEATURES)))
    _, g = detector_loss_and_grad(m, sub)
    fd = np.zeros_like(g)
    h = 1e-6
    for c in range(N_CLASSES):
        for j in range(N_FEATURES):
            w = m.weights.copy()
            w[c, j] += h
            lp, _ = detector_loss_and_grad(DetectorModel(w), sub)
            w[c, j] -= 2 * h
            lm, _ = detector_loss_and_grad(DetectorModel(w), sub)
            fd[c, j] = (lp - lm) / (2 * h)
    return g, fd


def test_gradient_matches_finite_differences(frame):
    for seed in range(3):
        g, fd = _gradient_check(seed, frame)
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(np.max(np.abs(fd)), 1e-12)


def test_training_reduces_loss(frame):
    m = DetectorModel.zeros()
    batch = detector_batch(frame.exposed, gt_boxes(frame.instance, frame.semantic))
    first = detector_train_step(m, batch)
    for _ in range(199):
        last = detector_train_step(m, batch)
    assert last < first and m.steps == 200


def test_gt_boxes_tight():
    inst = np.zeros((20, 20), dtype=np.int64)
    sem = np.zeros((20, 20), dtype=np.int64)
    inst[2:6, 3:9] = 5
    sem[2:6, 3:9] = 2
    inst[10:11, 10:11] = 6
    sem[10:11, 10:11] = 1
    assert gt_boxes(inst, sem).tolist() == [[3, 2, 9, 6, 2]]
