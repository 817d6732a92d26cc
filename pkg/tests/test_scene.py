import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camforge.camera import CameraDesign, Pose, render
from camforge.errors import EmptyScene, InfeasibleSpec
from camforge.scene import (BUILDING_CLASS, OBSTACLE_CLASS, SceneInstance, SceneKind, SceneSpec, TARGET_CLASS,
                            generate_scene, make_colorbar_target, plan_path)


def test_generation_is_deterministic():
    spec = SceneSpec(seed=11)
    a, b = generate_scene(spec), generate_scene(spec)
    assert a == b
    assert a.mesh_listing() == b.mesh_listing()


def test_different_seeds_differ():
    assert generate_scene(SceneSpec(seed=1)).primitives != generate_scene(SceneSpec(seed=2)).primitives


@pytest.mark.parametrize("seed", range(10))
def test_indoor_rooms_respect_min_length_and_doors(seed):
    scene = generate_scene(SceneSpec(seed=seed))
    assert len(scene.rooms) >= 2
    for r in scene.rooms:
        assert min(r.sides) >= 5.0 - 1e-9
    assert len(scene.obstacles) == len(scene.doors)
    area = sum(r.sides[0] * r.sides[1] for r in scene.rooms)
    assert area == pytest.approx(15.0 * 15.0)


@pytest.mark.parametrize("seed", range(5))
def test_obstacles_lie_on_floor_at_doorways(seed):
    scene = generate_scene(SceneSpec(seed=seed))
    for oid, door in zip(scene.obstacles, scene.doors):
        box = scene.obstacle_box(oid)
        assert box.class_id == OBSTACLE_CLASS
        assert box.lo[1] == 0.0 and box.hi[1] == pytest.approx(0.12)
        cx = 0.5 * (box.lo[0] + box.hi[0])
        cz = 0.5 * (box.lo[2] + box.hi[2])
        across, along = (cx, cz) if door.axis == 0 else (cz, cx)
        assert across == pytest.approx(door.coord)
        assert along == pytest.approx(door.center)


def test_semantic_ids_are_dense_with_zero_background(indoor_scene):
    ids = {b.class_id for b in indoor_scene.primitives}
    assert 0 not in ids
    assert ids <= set(range(1, 17))


def test_infeasible_extent_raises():
    with pytest.raises(InfeasibleSpec):
        generate_scene(SceneSpec(extent_m=(8.0, 8.0, 3.0)))
    with pytest.raises(InfeasibleSpec):
        SceneSpec(extent_m=(4.0, 15.0, 3.0))
    with pytest.raises(InfeasibleSpec):
        SceneSpec(extent_m=(0.0, 15.0, 3.0))


def test_outdoor_depth_span_over_seeds():
    for seed in range(20):
        scene = generate_scene(SceneSpec(kind=SceneKind.OUTDOOR_STRIP, seed=seed))
        depths = [g.depth for g in scene.gt_boxes]
        assert min(depths) <= 5.0
        assert max(depths) >= 250.0


def test_plan_path_rejects_zero_steps(indoor_scene):
    with pytest.raises(ValueError):
        plan_path(indoor_scene, 0, 0)


def test_plan_path_empty_scene():
    empty = SceneInstance(SceneKind.INDOOR, (15.0, 15.0, 3.0), (), (), 0.0, 0.0, (), ())
    with pytest.raises(EmptyScene):
        plan_path(empty, 10, 0)


def test_plan_path_deterministic(indoor_scene):
    assert plan_path(indoor_scene, 200, 4) == plan_path(indoor_scene, 200, 4)


@pytest.mark.parametrize("seed", range(10))
def test_every_obstacle_approached_and_room_visited(seed):
    scene = generate_scene(SceneSpec(seed=seed))
    path = plan_path(scene, 500, seed)
    crossed = set(path.crossing_steps())
    assert crossed == set(scene.obstacles)
    for oid, step, approach in path.crossing_events():
        assert approach, f"obstacle {oid} crossed at step {step} without an approach window"
        assert all(path.approaching[i] == oid for i in approach)
    visited = {scene.room_of(s.x, s.z) for s in path.steps}
    assert set(range(len(scene.rooms))) <= visited


@pytest.mark.parametrize("seed", range(5))
def test_path_is_collision_free_and_heights_in_range(seed):
    scene = generate_scene(SceneSpec(seed=seed))
    path = plan_path(scene, 400, seed)
    # floor and ceiling are zero-thickness; thresholds are stepped over
    solid = [b for b in scene.primitives if b.hi[1] > b.lo[1] and b.class_id != OBSTACLE_CLASS]
    for s in path.steps:
        assert 1.0 <= s.camera_height_m <= 2.0
        assert not any(b.contains_xz(s.x, s.z) for b in solid)
    heights = np.array([s.camera_height_m for s in path.steps])
    assert 1.35 < heights.mean() < 1.65


def test_outdoor_path_straight_at_two_meters(outdoor_scene):
    path = plan_path(outdoor_scene, 50, 0)
    assert all(s.camera_height_m == 2.0 and s.x == 0.0 for s in path.steps)
    assert [s.z for s in path.steps] == pytest.approx([0.2 * i for i in range(50)])


def test_colorbar_levels():
    two = make_colorbar_target(2)
    assert [b.albedo[0] for b in two.primitives] == [0.0, 1.0]
    eleven = make_colorbar_target(11)
    assert [b.albedo[0] for b in eleven.primitives] == pytest.approx([k / 10 for k in range(11)])
    assert all(b.class_id == TARGET_CLASS for b in eleven.primitives)
    with pytest.raises(ValueError):
        make_colorbar_target(1)


def test_colorbar_noiseless_render_has_zero_variance_per_bar():
    target = make_colorbar_target(5)
    design = CameraDesign(focal_mm=1.2, sensor_w_mm=1.0, sensor_h_mm=0.4, pixel_um=10.0)
    frame = render(target, Pose((0.0, 0.0, 0.0)), design)
    for k in range(1, 6):
        vals = frame.irradiance[frame.instance == k]
        assert vals.size > 0
        assert np.var(vals) == 0.0


def test_with_illuminance_scales_lights(indoor_scene):
    night = indoor_scene.with_illuminance(2.0)
    assert night.ambient == pytest.approx(indoor_scene.ambient / 10)
    assert night.primitives == indoor_scene.primitives


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_any_seed_gives_valid_indoor_scene(seed):
    scene = generate_scene(SceneSpec(seed=seed))
    assert len(scene.obstacles) == len(scene.doors) == len(scene.rooms) - 1
    assert all(min(r.sides) >= 5.0 - 1e-9 for r in scene.rooms)


def test_mesh_listing_one_line_per_primitive(outdoor_scene):
    lines = outdoor_scene.mesh_listing().splitlines()
    assert len(lines) == len(outdoor_scene.primitives) + 1
    assert any(f" {BUILDING_CLASS} " in ln for ln in lines[1:])
