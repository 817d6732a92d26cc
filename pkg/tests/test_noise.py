import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from camforge.errors import AllClipped, InsufficientData, ParseError
from camforge.noise import (REFERENCE_MODEL, ZERO_MODEL, NoiseModel, calibrate, generalize, level_statistics,
                            load_model, read_samples_csv, save_model, synthesize, variance_at)

G0 = REFERENCE_MODEL.g0_lin
A0 = REFERENCE_MODEL.pixel_area0_um2
gains = st.floats(0.1, 100.0)
areas = st.floats(0.5, 100.0)


def test_exact_line_fit():
    levels = np.linspace(0.1, 0.9, 9)
    m = calibrate([(x, 4e-4 * x + 1e-5) for x in levels], G0, A0)
    assert m.sigma_p_sq == pytest.approx(4e-4, abs=1e-12)
    assert m.sigma_r_sq == pytest.approx(1e-5, abs=1e-12)
    assert not m.clamped


def test_calibrate_errors():
    with pytest.raises(InsufficientData):
        calibrate([(0.5, 1e-4)], G0, A0)
    with pytest.raises(InsufficientData):
        calibrate([(0.5, 1e-4), (0.5, 2e-4)], G0, A0)
    with pytest.raises(AllClipped):
        calibrate([(0.01, 1e-4), (0.99, 2e-4)], G0, A0)
    with pytest.raises(InsufficientData):
        calibrate([(0.01, 1e-4), (0.5, 2e-4)], G0, A0)


def test_calibrate_drops_near_clip_levels():
    pts = [(x, 4e-4 * x + 1e-5) for x in (0.2, 0.5, 0.8)] + [(0.99, 0.0), (0.02, 1.0)]
    m = calibrate(pts, G0, A0)
    assert m.sigma_p_sq == pytest.approx(4e-4, abs=1e-12)


def test_negative_coefficients_clamped_and_flagged():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        m = calibrate([(0.2, 3e-4), (0.8, 1e-4)], G0, A0)
    assert m.clamped and m.sigma_p_sq == 0.0 and m.sigma_r_sq > 0
    assert w


def test_model_invariants():
    with pytest.raises(ValueError):
        NoiseModel(-1e-4, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        NoiseModel(1e-4, 0.0, 0.0, 1.0)


def test_generalize_examples():
    assert generalize(REFERENCE_MODEL, G0, A0) == REFERENCE_MODEL
    m = generalize(REFERENCE_MODEL, 2 * G0, A0)
    assert m.sigma_p_sq == 2 * 4e-4
    assert m.sigma_r_sq == pytest.approx(4 * 1e-5, rel=1e-15)
    assert variance_at(m, 0.5) == pytest.approx(2 * 4e-4 * 0.5 + 4 * 1e-5, rel=1e-12)
    assert variance_at(m, 0.5) == pytest.approx(4.4e-4, rel=1e-12)
    big = generalize(REFERENCE_MODEL, G0, 4 * A0)
    low = generalize(REFERENCE_MODEL, G0 / 4, A0)
    assert big.sigma_p_sq == pytest.approx(low.sigma_p_sq, rel=1e-12)
    assert big.sigma_r_sq == pytest.approx(low.sigma_r_sq, rel=1e-12)
    with pytest.raises(ValueError):
        generalize(REFERENCE_MODEL, 0.0, A0)


@given(gains, areas, gains, areas)
def test_generalize_monoid_action(g1, a1, g2, a2):
    two = generalize(generalize(REFERENCE_MODEL, g1, a1), g2, a2)
    one = generalize(REFERENCE_MODEL, g2, a2)
    assert two.sigma_p_sq == pytest.approx(one.sigma_p_sq, rel=1e-9)
    assert two.sigma_r_sq == pytest.approx(one.sigma_r_sq, rel=1e-9)
    assert generalize(one, g2, a2) == one


@given(gains, st.floats(0.0, 1.0, allow_subnormal=False))
def test_variance_scaling_identity(g, x):
    m = REFERENCE_MODEL
    diff = variance_at(generalize(m, 2 * g, A0), x) - variance_at(generalize(m, g, A0), x)
    expect = (2 * g / G0 - g / G0) * m.sigma_p_sq * x + ((2 * g / G0) ** 2 - (g / G0) ** 2) * m.sigma_r_sq
    assert diff == pytest.approx(expect, rel=1e-9, abs=1e-15)


def test_variance_at_examples():
    assert variance_at(REFERENCE_MODEL, 0.0) == 1e-5
    assert variance_at(REFERENCE_MODEL, 1.0) == pytest.approx(4.1e-4)


@given(st.floats(0.0, 1.0, allow_subnormal=False), st.floats(0.0, 1.0, allow_subnormal=False))
def test_variance_monotone(a, b):
    lo, hi = sorted((a, b))
    assert variance_at(REFERENCE_MODEL, lo) <= variance_at(REFERENCE_MODEL, hi)


def test_zero_model_identity():
    img = np.random.default_rng(0).uniform(size=(8, 9, 3))
    assert np.array_equal(synthesize(img, ZERO_MODEL, 1), img)


def test_mid_grey_statistics():
    out = synthesize(np.full((1000, 1000), 0.5), REFERENCE_MODEL, 7)
    assert out.var() == pytest.approx(2.1e-4, rel=0.02)
    assert abs(out.mean() - 0.5) < 1e-3


def test_synthesize_deterministic_and_clipped():
    img = np.random.default_rng(0).uniform(size=(20, 20, 3))
    heavy = NoiseModel(0.5, 0.1, 1.0, 1.0)
    a, b = synthesize(img, heavy, 3), synthesize(img, heavy, 3)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert not np.array_equal(a, synthesize(img, heavy, 4))


def test_channels_independent():
    img = np.full((300, 300, 3), 0.5)
    out = synthesize(img, REFERENCE_MODEL, 2)
    r = out.reshape(-1, 3) - 0.5
    c = np.corrcoef(r.T)
    assert np.all(np.abs(c[np.triu_indices(3, 1)]) < 0.02)


def test_exact_sampler_matches_moments():
    out = synthesize(np.full((1000, 1000), 0.5), REFERENCE_MODEL, 5, exact=True)
    assert out.var() == pytest.approx(2.1e-4, rel=0.03)
    assert abs(out.mean() - 0.5) < 1e-3


def test_round_trip_recovers_model():
    levels = np.linspace(0.0, 1.0, 11)
    img = np.repeat(levels, 100_000)
    labels = np.repeat(np.arange(11), 100_000)
    stats = level_statistics(synthesize(img, REFERENCE_MODEL, 11), labels)
    m = calibrate([(mu, var) for _, mu, var in stats], G0, A0)
    assert m.sigma_p_sq == pytest.approx(4e-4, rel=0.05)
    assert m.sigma_r_sq == pytest.approx(1e-5, rel=0.05)


def test_level_statistics():
    img = np.array([0.0, 1.0, 2.0, 2.0])
    s = level_statistics(img, np.array([1, 1, 0, 0]))
    assert s == [(0, 2.0, 0.0), (1, 0.5, 0.5)]


def test_model_file_round_trip(tmp_path):
    p = tmp_path / "m.txt"
    save_model(REFERENCE_MODEL, p)
    m = load_model(p)
    assert m.sigma_p_sq == REFERENCE_MODEL.sigma_p_sq and m.sigma_r_sq == REFERENCE_MODEL.sigma_r_sq
    assert m.g0_lin == pytest.approx(G0, rel=1e-12) and m.g0_db == pytest.approx(15.0)
    p.write_text("sigma_p_sq = x\n")
    with pytest.raises(ParseError):
        load_model(p)
    p.write_text("sigma_p_sq = 1\n")
    with pytest.raises(ParseError):
        load_model(p)


def test_samples_csv(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# measured\nmean,variance\n0.2,1e-4\n0.5,2e-4\n")
    assert read_samples_csv(p) == [(0.2, 1e-4), (0.5, 2e-4)]
    p.write_text("a,b\n")
    with pytest.raises(ParseError):
        read_samples_csv(p)
    p.write_text("mean,variance\n0.2,zz\n")
    with pytest.raises(ParseError) as e:
        read_samples_csv(p)
    assert "2" in str(e.value)
