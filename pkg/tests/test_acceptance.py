"""Build exit criteria, one group per criterion; the summary hook prints one PASS/FAIL line each."""

import math
import shutil
import subprocess
import time

import numpy as np
import pytest

from oge.folds import kfold_split
from oge.glare_metrics import SourceDetectionParams, glare_metrics
from oge.hdr_io import HdrImage, LuminanceMap, read_radiance_hdr, to_luminance, write_radiance_hdr
from oge.ml import ClassifierSpec, cross_validate
from oge.mrl_features import DEFAULT_GRIDS, REFERENCE_COUNTS, assemble_matrix_D, build_mask, extract_mrl
from oge.photometry import FisheyeGeometry, geometry_grids, vertical_illuminance
from oge.reports import Confusion, apply_acceptance_gates
from oge.roc import roc_curve, summarize, variation_error
from oge.synth import ScenarioParams, generate_corpus
from roc_oracle import brute_auc, brute_best, brute_curve

acceptance = pytest.mark.acceptance


# 1 ------------------------------------------------------------------------------------------

@acceptance(1, "mask region counts vs printed grid table")
def test_c1_mask_counts(record_property):
    t0 = time.perf_counter()
    counts = {g: build_mask(g).count for g in DEFAULT_GRIDS}
    elapsed = time.perf_counter() - t0
    rel = {g: (counts[g] - REFERENCE_COUNTS[g]) / REFERENCE_COUNTS[g] for g in DEFAULT_GRIDS}
    exact = sum(counts[g] == REFERENCE_COUNTS[g] for g in DEFAULT_GRIDS)
    record_property("counts", "/".join(str(counts[g]) for g in DEFAULT_GRIDS))
    record_property("exact", exact)
    record_property("worst_rel", f"{max(abs(v) for v in rel.values()):.4f}")
    assert REFERENCE_COUNTS == {10: 62, 15: 133, 20: 244, 25: 374, 30: 554, 35: 739, 40: 980}
    assert all(abs(v) <= 0.02 for v in rel.values())
    assert exact >= 4
    assert elapsed < 10


# 2 ------------------------------------------------------------------------------------------

@acceptance(2, "confusion arithmetic TP=24 FN=6 TN=43 FP=7")
def test_c2_confusion(record_property):
    c = Confusion(tp=24, tn=43, fp=7, fn=6)
    record_property("OA", c.oa)
    assert c.oa == 0.8375
    assert c.tpr == 0.80
    assert c.tnr == 0.86
    assert round(c.oa * 100, 1) == 83.8


# 3 ------------------------------------------------------------------------------------------

@acceptance(3, "variation errors vs printed cut-off table")
@pytest.mark.parametrize("c1,c2,printed", [(103, 103, 0.0), (3.10, 3.34, 7.7), (19.88, 16.14, 18.8),
                                           (32069, 29737, 7.3)])
def test_c3_variation_error(c1, c2, printed, record_property):
    e = variation_error(c1, c2)
    record_property(f"E({c1},{c2})", f"{e:.3f}")
    assert abs(e - printed) <= 0.1


# 4 ------------------------------------------------------------------------------------------

@acceptance(4, "photometric identities")
def test_c4_solid_angle_closure(record_property):
    g = geometry_grids(FisheyeGeometry.for_image(1000, 1000))
    dev = abs(g.omega.sum() - 2 * math.pi) / (2 * math.pi)
    record_property("omega_rel_dev", f"{dev:.2e}")
    assert dev <= 1e-3


@acceptance(4, "photometric identities")
def test_c4_uniform_field(record_property):
    geom = FisheyeGeometry.for_image(1000, 1000)
    ev = vertical_illuminance(LuminanceMap(np.full((1000, 1000), 250.0)), geom)
    dev = abs(ev / (250 * math.pi) - 1)
    record_property("uniform_rel_dev", f"{dev:.2e}")
    assert dev <= 0.005


@acceptance(4, "photometric identities")
def test_c4_patch_scene(record_property):
    geom = FisheyeGeometry.for_image(1000, 1000)
    g = geometry_grids(geom)
    omega_cap, theta_c, L = 0.1, math.radians(30), 2000.0
    alpha = math.acos(1 - omega_cap / (2 * math.pi))
    c = np.array([0.0, math.sin(theta_c), math.cos(theta_c)])
    lum = np.where((g.direction() @ c >= math.cos(alpha)) & g.inside, L, 0.0)
    ev = vertical_illuminance(LuminanceMap(lum), geom)
    exact = L * math.cos(theta_c) * math.pi * math.sin(alpha) ** 2  # cap integral of L cos(theta)
    dev = abs(ev / exact - 1)
    record_property("patch_rel_dev", f"{dev:.2e}")
    assert dev <= 0.02
    assert abs(ev / 173.2 - 1) <= 0.02  # small-patch value L * omega * cos(theta)


# 5 ------------------------------------------------------------------------------------------

@acceptance(5, "ROC against exhaustive threshold enumeration")
def test_c5_roc_oracle(record_property):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(2, 101))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = rng.integers(0, int(rng.integers(1, n + 1)), n).astype(float)
        c = roc_curve(s, y)
        tpr, fpr = brute_curve(s, y)
        assert c.tpr.tolist() == [float(v) for v in tpr]
        assert c.fpr.tolist() == [float(v) for v in fpr]
        assert c.auc == pytest.approx(float(brute_auc(s, y)), abs=1e-12)
        cut, sqd, _, _ = brute_best(s, y)
        summ = summarize(c)
        assert summ.cutoff == cut
        assert summ.sqd == pytest.approx(float(sqd), abs=1e-12)
    elapsed = time.perf_counter() - t0
    record_property("seconds", f"{elapsed:.1f}")
    assert elapsed < 30


# 6 ------------------------------------------------------------------------------------------

# (feature, OA %, TPR, TNR, passes per the printed calls); the two blank cells of the
# background row are filled from the comparison table, the blank TPR of the 24-metric row
# from the results prose
BEST_MODEL_ROWS = [
    ("Ev", 70, 0.33, 0.92, False),
    ("Ev_dir", 68.8, 0.67, 0.70, False),
    ("DGP", 68.8, 0.47, 0.82, False),
    ("UGP", 63.7, 0.23, 0.88, False),
    ("UGR", 67.5, 0.27, 0.92, False),
    ("UGR_exp", 65, 0.3, 0.88, False),
    ("VCP", 65, 0.37, 0.82, False),
    ("DGI", 70, 0.4, 0.88, False),
    ("DGI_mod", 70, 0.4, 0.88, False),
    ("CGI", 65, 0.4, 0.80, False),
    ("DGR", 71.3, 0.47, 0.86, False),
    ("Lveil", 66.3, 0.23, 0.92, False),
    ("Lveil_CIE", 71.3, 0.47, 0.86, False),
    ("Omega_S", 71.3, 0.37, 0.92, False),
    ("Lum_sources", 67.5, 0.23, 0.94, False),
    ("Av_Lum_pos", 68.8, 0.33, 0.90, False),
    ("Av_Lum_pos2", 68.8, 0.5, 0.80, False),
    ("Med_lum", 76.3, 0.43, 0.96, False),
    ("Med_lum_pos", 73.8, 0.43, 0.92, False),
    ("Med_lum_pos2", 77.5, 0.43, 0.98, False),
    ("Av_Lum", 75, 0.37, 0.98, False),
    ("Lum_Background", 76.3, 0.47, 0.94, False),
    ("Task_Lum", 71.3, 0.67, 0.74, True),
    ("Max_Lum", 65, 0.37, 0.82, False),
    ("6-metrics", 70, 0.43, 0.86, False),
    ("24-metrics", 73.8, 0.33, 0.98, False),
    ("MRL-62", 77.5, 0.5, 0.94, False),
    ("MRL-133", 76.3, 0.57, 0.88, True),
    ("MRL-244", 72.5, 0.47, 0.88, False),
    ("MRL-374", 83.8, 0.80, 0.86, True),
    ("MRL-544", 73.8, 0.63, 0.80, True),
    ("MRL-739", 78.8, 0.63, 0.88, True),
    ("MRL-980", 76.3, 0.53, 0.90, True),
]


@acceptance(6, "gate calls on the 33 best-model rows")
def test_c6_gates(record_property):
    assert len(BEST_MODEL_ROWS) == 33
    got = {name: apply_acceptance_gates({"oa": oa / 100, "tpr": tpr, "tnr": tnr}).passed
           for name, oa, tpr, tnr, _ in BEST_MODEL_ROWS}
    expected = {name: ok for name, *_, ok in BEST_MODEL_ROWS}
    record_property("passing", "+".join(n for n, ok in got.items() if ok))
    assert got == expected
    best = apply_acceptance_gates({"oa": 0.838, "tpr": 0.80, "tnr": 0.86, "auc": 0.85, "sqd": 0.06})
    assert best.passed
    low_tpr = apply_acceptance_gates({"oa": 0.738, "tpr": 0.33, "tnr": 0.98})
    assert not low_tpr.passed and low_tpr.failed() == ["TPR"]
    dgp_row = apply_acceptance_gates({"oa": 0.688, "tpr": 0.47, "tnr": 0.82})
    assert "OA" in dgp_row.failed()
    assert apply_acceptance_gates({"oa": 0.69, "tpr": 0.8, "tnr": 0.8, "auc": 0.9, "sqd": 0.1}).failed() == ["OA"]


# 7 ------------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def learning_corpus():
    t0 = time.perf_counter()
    scenes = generate_corpus(ScenarioParams(n_scenes=200, label_noise=0.05, seed=0))
    mask = build_mask(25)
    feats = [extract_mrl(to_luminance(s.image), None, 25, mask) for s in scenes]
    return feats, np.array([s.label for s in scenes]), t0


@acceptance(7, "end-to-end learning on a synthetic corpus")
def test_c7_rusboost_learns(learning_corpus, record_property):
    feats, labels, t0 = learning_corpus
    D = assemble_matrix_D(feats, labels)
    assert D.dataset_name == "MRL-374"
    rep = cross_validate(D, ClassifierSpec("rusboost_trees"), k=5, seed=0)
    record_property("OA", f"{rep.oa:.3f}")
    record_property("TPR", f"{rep.tpr:.3f}")
    record_property("TNR", f"{rep.tnr:.3f}")
    assert rep.oa >= 0.85
    assert rep.tpr >= 0.75 and rep.tnr >= 0.75
    assert time.perf_counter() - t0 < 300


@acceptance(7, "end-to-end learning on a synthetic corpus")
def test_c7_permutation_null(learning_corpus, record_property):
    feats, labels, t0 = learning_corpus
    shuffled = np.random.default_rng(99).permutation(labels)
    rep = cross_validate(assemble_matrix_D(feats, shuffled), ClassifierSpec("rusboost_trees"), k=5, seed=0)
    record_property("null_OA", f"{rep.oa:.3f}")
    assert abs(rep.oa - 0.5) <= 0.07
    assert time.perf_counter() - t0 < 300


# 8 ------------------------------------------------------------------------------------------

@acceptance(8, "k-fold contract")
def test_c8_kfold():
    fa = kfold_split(80, 5, seed=1234)
    assert fa.sizes() == [16] * 5
    tested = np.sort(np.concatenate([te for _, te in fa.folds()]))
    assert np.array_equal(tested, np.arange(80))
    assert kfold_split(80, 5, seed=1234).assignment.tobytes() == fa.assignment.tobytes()


# 9 ------------------------------------------------------------------------------------------

@acceptance(9, "HDR write/read round trip")
def test_c9_round_trip(record_property):
    rng = np.random.default_rng(9)
    worst_max_rel = worst_grey = worst_strict = 0.0
    for i in range(1000):
        h, w = rng.integers(1, 17, size=2)
        scale = 10.0 ** rng.uniform(-3, 5)
        px = rng.uniform(0, 1, size=(h, w, 3)) * scale
        if i % 4 == 0:
            px[...] = px[..., :1]  # grey pixels: every channel carries the shared exponent
        back = read_radiance_hdr(write_radiance_hdr(HdrImage(px))).pixels
        peak = px.max(axis=-1, keepdims=True)
        nz = peak[..., 0] > 0
        worst_max_rel = max(worst_max_rel, float((np.abs(back - px) / np.where(peak > 0, peak, 1)).max()))
        if i % 4 == 0:
            worst_grey = max(worst_grey, float((np.abs(back - px)[nz] / px[nz]).max()))
        big = px > 0.5 * peak  # channels within one binade of the pixel's largest
        worst_strict = max(worst_strict, float((np.abs(back - px)[big] / px[big]).max()))
    record_property("max_rel_vs_peak", f"{worst_max_rel:.5f}")
    record_property("max_rel_grey", f"{worst_grey:.5f}")
    record_property("max_rel_top_binade", f"{worst_strict:.5f}")
    assert worst_max_rel <= 1 / 256
    assert worst_grey <= 1 / 256
    assert worst_strict <= 1 / 128


@acceptance(9, "HDR write/read round trip")
def test_c9_reference_toolchain(tmp_path):
    tool = shutil.which("getinfo")
    if tool is None:
        pytest.skip("Radiance getinfo not installed; manual check documented in the README")
    f = tmp_path / "x.hdr"
    f.write_bytes(write_radiance_hdr(HdrImage(np.ones((4, 5, 3)))))
    out = subprocess.run([tool, "-d", str(f)], capture_output=True, text=True, check=True).stdout
    assert "-Y 4 +X 5" in out


# 10 -----------------------------------------------------------------------------------------

def _single_source_scene(rng, res=121):
    geom = FisheyeGeometry.for_image(res, res)
    g = geometry_grids(geom)
    theta = math.radians(rng.uniform(10, 70))
    phi = rng.uniform(-math.pi, math.pi)
    radius = math.radians(rng.uniform(2, 6))
    c = np.array([math.sin(theta) * math.sin(phi), math.sin(theta) * math.cos(phi), math.cos(theta)])
    disk = (g.direction() @ c >= math.cos(radius)) & g.inside
    return geom, disk, float(rng.uniform(30, 150)), float(10 ** rng.uniform(3, 4.5))


def _record(geom, disk, background, source):
    lum = LuminanceMap(np.where(disk, source, background))
    return glare_metrics(lum, geom, SourceDetectionParams(absolute_floor=800.0))


@acceptance(10, "index monotonicity on random single-source scenes")
def test_c10_monotone_in_source_luminance(record_property):
    rng = np.random.default_rng(10)
    bad = {"DGP": 0, "UGR": 0, "DGI": 0, "CGI": 0, "VCP": 0}
    for _ in range(100):
        geom, disk, bg, src = _single_source_scene(rng)
        a = _record(geom, disk, bg, src)
        b = _record(geom, disk, bg, 2 * src)
        assert a.Omega_S == b.Omega_S > 0
        for name in ("DGP", "UGR", "DGI", "CGI"):
            bad[name] += not getattr(b, name) > getattr(a, name)
        assert b.DGR > a.DGR
        bad["VCP"] += not b.VCP < a.VCP
    record_property("violations", bad)
    assert not any(bad.values())


@acceptance(10, "index monotonicity on random single-source scenes")
def test_c10_dgp_monotone_in_ev(record_property):
    rng = np.random.default_rng(11)
    violations = []
    for _ in range(100):
        geom, disk, bg, src = _single_source_scene(rng)
        a = _record(geom, disk, bg, src)
        b = _record(geom, disk, 1.25 * bg, src)  # raises Ev, leaves the source set unchanged
        assert b.Ev > a.Ev and b.Omega_S == a.Omega_S
        if not b.DGP > a.DGP:
            violations.append(round(a.Ev))
    record_property("dgp_ev_violations", len(violations))
    assert not violations, f"DGP fell with rising Ev in {len(violations)}/100 scenes (Ev {violations[:5]}...)"
