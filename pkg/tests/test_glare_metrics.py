import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from oge.errors import DetectionError
from oge.glare_metrics import (
    METRIC_NAMES,
    GlareMetricsExtractor,
    GlareMetricsRecord,
    SourceDetectionParams,
    cgi,
    detect_sources,
    dgi,
    dgp,
    dgr,
    glare_metrics,
    ugp,
    ugr,
    ugr_exp,
    vcp,
)
from oge.hdr_io import LuminanceMap
from oge.photometry import FisheyeGeometry, geometry_grids


def direction(theta, phi):
    return np.array([math.sin(theta) * math.sin(phi), math.sin(theta) * math.cos(phi), math.cos(theta)])


def disk(geom, centres, alpha, L=3000.0, background=0.0):
    """Map with luminance ``L`` inside cones of half-angle ``alpha`` around each (theta, phi)."""
    g = geometry_grids(geom)
    d = g.direction()
    vals = np.full((geom.height, geom.width), background)
    for t, p in centres:
        vals[(d @ direction(t, p) >= math.cos(alpha)) & g.inside] = L
    return LuminanceMap(vals)


FLOOR = SourceDetectionParams(absolute_floor=500.0)


def test_uniform_scene_has_no_sources():
    geom = FisheyeGeometry.for_image(120, 120)
    assert detect_sources(LuminanceMap(np.full((120, 120), 80.0)), geom) == []


def test_single_disk_matches_analytic_solid_angle():
    geom = FisheyeGeometry.for_image(800, 800)
    alpha = math.radians(5)
    lum = disk(geom, [(math.radians(25), 0.7)], alpha)
    (src,) = detect_sources(lum, geom, FLOOR)
    assert src.L_s == pytest.approx(3000.0)
    assert abs(src.omega_s / (2 * math.pi * (1 - math.cos(alpha))) - 1) < 0.02
    assert src.centroid_theta == pytest.approx(math.radians(25), abs=0.01)
    assert src.centroid_phi == pytest.approx(0.7, abs=0.01)


@pytest.mark.parametrize("sep,expected", [(0.1, 1), (0.5, 2)])
def test_merge_rule(sep, expected):
    geom = FisheyeGeometry.for_image(600, 600)
    alpha = 0.03
    t0 = 0.5
    lum = disk(geom, [(t0 - sep / 2, 0.0), (t0 + sep / 2, 0.0)], alpha)
    # brute force: the two disks are separate 8-connected blobs before merging
    _, n = ndimage.label(lum.values > 500, structure=np.ones((3, 3)))
    assert n == 2
    sources = detect_sources(lum, geom, SourceDetectionParams(absolute_floor=500.0, merge_radius=0.2))
    assert len(sources) == expected
    assert sum(len(s.pixel_ids) for s in sources) == int((lum.values > 500).sum())


def test_merge_radius_zero_keeps_components():
    geom = FisheyeGeometry.for_image(600, 600)
    lum = disk(geom, [(0.45, 0.0), (0.55, 0.0)], 0.03)
    assert len(detect_sources(lum, geom, SourceDetectionParams(absolute_floor=500.0, merge_radius=0.0))) == 2


def test_zero_task_luminance_without_floor():
    geom = FisheyeGeometry.for_image(100, 100)
    lum = disk(geom, [(1.2, 1.0)], 0.1)  # black task zone
    with pytest.raises(DetectionError):
        detect_sources(lum, geom)
    assert len(detect_sources(lum, geom, FLOOR)) == 1


def test_detection_params_validation():
    with pytest.raises(ValueError):
        SourceDetectionParams(threshold_multiplier=1.0)
    with pytest.raises(ValueError):
        SourceDetectionParams(merge_radius=-0.1)


def test_ugr_hand_value():
    expected = 8 * math.log10((0.25 / 40) * 4000 ** 2 * 0.05 / 1.5 ** 2)
    assert expected == pytest.approx(26.78, abs=0.01)
    assert ugr(40, [4000], [0.05], [1.5]) == pytest.approx(expected, rel=1e-12)


def test_ugp_is_linear_in_ugr():
    assert ugp(0.0) == 0.0
    assert ugp(16.0) == pytest.approx(2 * ugp(8.0))


def test_no_source_floors():
    ev = 400.0
    assert dgp(ev, [], [], []) == pytest.approx(5.87e-5 * ev + 0.16)
    for value in (ugr(40, [], [], []), ugr_exp(ev, [], [], []), dgi(40, [], [], []), cgi(ev, 0, [], [], []),
                  dgr(100, [], [], []), vcp(dgr(100, [], [], []))):
        assert math.isfinite(value)
    assert ugr(40, [], [], []) < 0


def test_source_free_image_is_finite():
    geom = FisheyeGeometry.for_image(100, 100)
    rec = glare_metrics(LuminanceMap(np.full((100, 100), 127.3)), geom)
    values = rec.as_array()
    assert values.shape == (24,) and np.all(np.isfinite(values))
    assert rec.Omega_S == 0.0 and rec.Ev_dir == 0.0
    assert rec.DGP == pytest.approx(5.87e-5 * rec.Ev + 0.16)


@settings(max_examples=80, deadline=None)
@given(L=st.floats(10.0, 1e5), omega=st.floats(1e-4, 0.5), P=st.floats(1.0, 16.0), ev=st.floats(50, 5000),
       lb=st.floats(1.0, 1000.0))
def test_indices_increase_with_source_luminance(L, omega, P, ev, lb):
    two = 2 * L
    assert dgp(ev, [two], [omega], [P]) > dgp(ev, [L], [omega], [P])
    assert ugr(lb, [two], [omega], [P]) > ugr(lb, [L], [omega], [P])
    assert ugr_exp(ev, [two], [omega], [P]) > ugr_exp(ev, [L], [omega], [P])
    assert dgi(lb, [two], [omega], [P]) > dgi(lb, [L], [omega], [P])
    assert cgi(ev, 10.0, [two], [omega], [P]) > cgi(ev, 10.0, [L], [omega], [P])
    assert dgr(lb, [two], [omega], [P]) > dgr(lb, [L], [omega], [P])


@settings(max_examples=60, deadline=None)
@given(a=st.floats(1e-3, 1e4), b=st.floats(1e-3, 1e4))
def test_vcp_decreases_with_dgr(a, b):
    lo, hi = sorted((a, b))
    # erf saturates in double precision at the extremes, hence the weak inequality here
    assert 0.0 <= vcp(hi) <= vcp(lo) <= 100.0


def test_vcp_strict_in_working_range():
    d = np.geomspace(1.0, 400.0, 50)
    v = [vcp(x) for x in d]
    assert all(x > y for x, y in zip(v, v[1:]))


def test_dgp_increases_with_ev_without_sources():
    evs = np.linspace(10, 5000, 100)
    vals = [dgp(e, [], [], []) for e in evs]
    assert all(x < y for x, y in zip(vals, vals[1:]))


@settings(max_examples=60, deadline=None)
@given(L=st.floats(10.0, 1e5), omega=st.floats(1e-4, 0.5), P=st.floats(1.0, 16.0), ev=st.floats(1300, 2e4))
def test_dgp_increases_with_ev_above_saturation_knee(L, omega, P, ev):
    assert dgp(ev * 1.01, [L], [omega], [P]) > dgp(ev, [L], [omega], [P])


def test_dgp_can_fall_with_ev_below_knee():
    # the source term is normalised by Ev**1.87, so a strong fixed source loses weight as Ev grows
    assert dgp(400, [2e4], [0.01], [1.2]) > dgp(800, [2e4], [0.01], [1.2])


def _scene(seed=0, n=301):
    rng = np.random.default_rng(seed)
    geom = FisheyeGeometry.for_image(n, n)
    lum = disk(geom, [(0.6, 0.3), (1.0, -2.0)], 0.06, L=20000.0).values
    lum = lum + rng.uniform(50, 150, size=lum.shape)
    return LuminanceMap(lum), geom


def test_record_invariants_and_decomposition():
    lum, geom = _scene()
    rec = glare_metrics(lum, geom)
    assert rec.Omega_S > 0
    assert rec.Ev_dir <= rec.Ev
    assert rec.Omega_S <= 2 * math.pi
    assert rec.Max_Lum >= rec.Lum_sources
    assert abs((rec.Ev_dir + math.pi * rec.Lum_Background) / rec.Ev - 1) < 1e-6
    assert tuple(rec.as_dict()) == METRIC_NAMES


def test_nonsource_background_option():
    lum, geom = _scene()
    a = glare_metrics(lum, geom, background="nonsource")
    assert 50 <= a.Lum_Background <= 150
    with pytest.raises(ValueError):
        glare_metrics(lum, geom, background="median")


def test_doubling_source_luminance():
    geom = FisheyeGeometry.for_image(301, 301)
    base = disk(geom, [(0.6, 0.3)], 0.06, L=5000.0, background=100.0)
    brighter = disk(geom, [(0.6, 0.3)], 0.06, L=10000.0, background=100.0)
    a = glare_metrics(base, geom, FLOOR)
    b = glare_metrics(brighter, geom, FLOOR)
    assert b.Omega_S == a.Omega_S
    for name in ("DGP", "UGR", "DGI", "CGI"):
        assert getattr(b, name) > getattr(a, name), name


def test_rotation_stability():
    lum, geom = _scene(seed=3)
    a = glare_metrics(lum, geom)
    b = glare_metrics(LuminanceMap(np.rot90(lum.values).copy()), geom)
    for name in ("Ev", "Av_Lum", "Max_Lum", "Omega_S"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-3), name


def test_extractor_estimator_api():
    lum, geom = _scene(n=101)
    ex = GlareMetricsExtractor()
    X = ex.fit_transform([lum, lum])
    assert X.shape == (2, 24)
    assert np.array_equal(X[0], X[1])
    assert list(ex.get_feature_names_out()) == list(METRIC_NAMES)
    assert ex.get_params()["merge_radius"] == 0.2
    assert GlareMetricsExtractor().fit([]).transform([]).shape == (0, 24)


def test_record_field_count():
    assert len(METRIC_NAMES) == 24
    assert len(GlareMetricsRecord.__dataclass_fields__) == 24
