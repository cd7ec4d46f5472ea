"""Synthetic labelled fisheye scenes for end-to-end testing.

A scene is a smooth log-normal luminance background plus one or more bright
disks ("luminaires") placed at jittered slot positions in the upper field.
Its generative glare score is

    g = log10(max_i L_i**2 * omega_i / P_i**2) + Ev / 1000

and the noiseless label is ``g > GEN_THRESHOLD``.  The constants are
arbitrary; they only give both feature paths something to learn.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from .errors import EmptyRequestError, GenerationError
from .hdr_io import HdrImage, image_from_luminance, read_radiance_hdr, to_luminance, write_radiance_hdr
from .photometry import FisheyeGeometry, geometry_grids, position_index, vertical_illuminance

__all__ = ["ScenarioParams", "SourceRecord", "GenerativeRecord", "SyntheticScene", "generate_scene",
           "generate_corpus", "generative_score", "write_corpus", "GEN_THRESHOLD", "SLOTS"]

GEN_THRESHOLD = 5.5

# (theta, phi) in degrees of the candidate source positions
SLOTS = ((22.0, 0.0), (38.0, 55.0), (38.0, -55.0), (55.0, 110.0), (55.0, -110.0), (30.0, 180.0))


@dataclass(frozen=True)
class ScenarioParams:
    n_scenes: int = 80
    positive_fraction: float = 0.375
    quota: bool = True
    background_median: float = 100.0  # cd/m2
    background_sigma: float = 0.35  # log-space spread between scenes
    background_texture: float = 0.25  # log-space spatial variation within a scene
    source_count: tuple[int, int] = (1, 3)
    source_lum: tuple[float, float] = (5.0e2, 5.0e4)  # cd/m2, log-uniform
    source_radius_deg: tuple[float, float] = (1.5, 2.0)
    slots: tuple[tuple[float, float], ...] = SLOTS
    slot_jitter_deg: float = 1.0
    label_noise: float = 0.0
    score_margin: float = 0.3  # redraw scenes whose score lies within this distance of the threshold
    resolution: int = 256
    seed: int = 0
    max_attempts: int = 2000

    def validate(self) -> None:
        if self.n_scenes < 1:
            raise EmptyRequestError("n_scenes must be at least 1")
        if not 0 < self.positive_fraction < 1:
            raise ValueError("positive_fraction must lie in (0, 1)")
        if self.score_margin < 0:
            raise ValueError("score_margin must be non-negative")
        if not 0 <= self.label_noise <= 0.5:
            raise ValueError("label_noise must lie in [0, 0.5]")
        lo, hi = self.source_count
        if not 1 <= lo <= hi <= len(self.slots):
            raise ValueError(f"source_count must satisfy 1 <= lo <= hi <= {len(self.slots)}")
        for name in ("source_lum", "source_radius_deg"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be a positive (lo, hi) range")
        if self.background_median <= 0 or self.background_sigma < 0 or self.background_texture < 0:
            raise ValueError("background parameters must be positive")
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16 pixels")


@dataclass(frozen=True)
class SourceRecord:
    theta_deg: float
    phi_deg: float
    radius_deg: float
    luminance: float

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * (1.0 - math.cos(math.radians(self.radius_deg)))

    @property
    def position(self) -> float:
        return float(position_index(math.radians(self.theta_deg), math.radians(self.phi_deg)))


@dataclass(frozen=True)
class GenerativeRecord:
    sources: tuple[SourceRecord, ...]
    background_lum: float
    ev: float
    gen_score: float
    clean_label: int
    flipped: bool
    seed: int


@dataclass(frozen=True)
class SyntheticScene:
    scene_id: str
    image: HdrImage
    label: int
    record: GenerativeRecord


def generative_score(sources, ev: float) -> float:
    peak = max(s.luminance ** 2 * s.omega / s.position ** 2 for s in sources)
    return math.log10(peak) + ev / 1000.0


def _render(params: ScenarioParams, rng: np.random.Generator, geom: FisheyeGeometry):
    g = geometry_grids(geom)
    n = params.resolution
    bg = float(params.background_median * math.exp(params.background_sigma * rng.standard_normal()))
    coarse = rng.standard_normal((6, 6))
    field_ = zoom(coarse, n / 6.0, order=3)[:n, :n]
    field_ = gaussian_filter(field_, sigma=n / 24.0)
    field_ /= max(float(field_.std()), 1e-12)
    L = bg * np.exp(params.background_texture * field_)

    k = int(rng.integers(params.source_count[0], params.source_count[1] + 1))
    chosen = rng.choice(len(params.slots), size=k, replace=False)
    dirs = g.direction()
    lo, hi = np.log(params.source_lum)
    sources = []
    for si in sorted(int(s) for s in chosen):
        t0, p0 = params.slots[si]
        t = t0 + params.slot_jitter_deg * rng.uniform(-1, 1)
        p = p0 + params.slot_jitter_deg * rng.uniform(-1, 1)
        r = float(rng.uniform(*params.source_radius_deg))
        lum = float(np.exp(rng.uniform(lo, hi)))
        tr, pr = math.radians(t), math.radians(p)
        c = np.array([math.sin(tr) * math.sin(pr), math.sin(tr) * math.cos(pr), math.cos(tr)])
        disk = (dirs @ c) >= math.cos(math.radians(r))
        L = np.where(disk, lum, L)
        sources.append(SourceRecord(theta_deg=t, phi_deg=p, radius_deg=r, luminance=lum))
    L = np.where(g.inside, L, 0.0)
    return L, tuple(sources), bg


def generate_scene(params: ScenarioParams, scene_id: str, seed_seq: np.random.SeedSequence,
                   want_clean_label: int | None = None, flipped: bool = False) -> SyntheticScene:
    """Draw scenes from ``seed_seq`` until one has the wanted noiseless label.

    The image is passed through the RGBE encoder so the recorded Ev and score
    describe exactly what a reader of the written file sees.
    """
    rng = np.random.default_rng(seed_seq)
    geom = FisheyeGeometry.for_image(params.resolution, params.resolution)
    seed_int = int(seed_seq.generate_state(1)[0])
    for _ in range(params.max_attempts):
        L, sources, bg = _render(params, rng, geom)
        img = read_radiance_hdr(write_radiance_hdr(image_from_luminance(L)))
        ev = vertical_illuminance(to_luminance(img), geom)
        score = generative_score(sources, ev)
        clean = int(score > GEN_THRESHOLD)
        if abs(score - GEN_THRESHOLD) < params.score_margin:
            continue
        if want_clean_label is None or clean == want_clean_label:
            label = 1 - clean if flipped else clean
            rec = GenerativeRecord(sources=sources, background_lum=bg, ev=ev, gen_score=score,
                                   clean_label=clean, flipped=flipped, seed=seed_int)
            return SyntheticScene(scene_id=scene_id, image=img, label=label, record=rec)
    raise GenerationError(f"scene {scene_id}: no draw with label {want_clean_label} "
                          f"after {params.max_attempts} attempts")


def _plan(params: ScenarioParams):
    """Per-scene (wanted clean label or None, flipped) decided up front from the master seed."""
    rng = np.random.default_rng(np.random.SeedSequence(params.seed).spawn(1)[0])
    n = params.n_scenes
    flips = rng.random(n) < params.label_noise
    if not params.quota:
        return [(None, bool(f)) for f in flips]
    n_pos = int(round(n * params.positive_fraction))
    final = np.zeros(n, dtype=np.int64)
    final[rng.permutation(n)[:n_pos]] = 1
    return [(int(1 - y if f else y), bool(f)) for y, f in zip(final, flips)]


def generate_corpus(params: ScenarioParams, threads: int = 1) -> list[SyntheticScene]:
    """Scenes ``scene_0000`` ... with per-scene seeds, so thread count never changes output.

    In quota mode the final positive count is exactly ``round(n * positive_fraction)``.
    """
    params.validate()
    width = max(4, len(str(params.n_scenes - 1)))
    seqs = np.random.SeedSequence(params.seed).spawn(params.n_scenes + 1)[1:]
    plan = _plan(params)

    def one(i):
        want, flipped = plan[i]
        return generate_scene(params, f"scene_{i:0{width}d}", seqs[i], want, flipped)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(params.n_scenes)))
    return [one(i) for i in range(params.n_scenes)]


def manifest_csv(scenes: list[SyntheticScene], header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label", "ev", "gen_score", "seed"])
    for s in scenes:
        w.writerow([s.scene_id, s.label, repr(s.record.ev), repr(s.record.gen_score), s.record.seed])
    return buf.getvalue()


def write_corpus(scenes: list[SyntheticScene], out_dir, header_lines=()) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in scenes:
        (out / f"{s.scene_id}.hdr").write_bytes(write_radiance_hdr(s.image))
    (out / "manifest.csv").write_text(manifest_csv(scenes, header_lines))
    return out


def params_dict(params: ScenarioParams) -> dict:
    return asdict(params)

