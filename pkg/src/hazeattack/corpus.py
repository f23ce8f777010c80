"""Procedurally generated 10-class natural-scene corpus for desk-scale runs.

Full-size photo datasets are out of reach for a self-contained test rig,
so the evaluation pipeline runs on small synthetic "scenes" (sky, grass,
water, ...) with seeded intra-class variation.  Classes are separable by
hue and texture orientation, which a small CNN learns quickly, while
leaving realistic attack surface.

Generation is fully deterministic: every image draws from its own
``default_rng([seed, label, index])`` stream, and pixel values are
quantized to 8 bits so in-memory arrays match their PNG round-trip
exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import LabeledExample, resize_bilinear
from .imagecore import load_image, save_image

CLASS_NAMES = (
    "sand", "grass", "water", "mist", "forest",
    "pavers", "scrub", "rock", "rows", "gravel",
)

LABELS_FILENAME = "labels.json"


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5) / 255.0


def _value_noise(rng, size: int, cells: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(cells, cells))
    return resize_bilinear(coarse, size, size)


def _smoothstep(x, lo, hi):
    t = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _vertical_ramp_image(rng, s, top, bottom):
    ramp = np.linspace(0.0, 1.0, s)[:, None, None]
    gradient = top[None, None, :] * (1.0 - ramp) + bottom[None, None, :] * ramp
    return np.broadcast_to(gradient, (s, s, 3)).copy()


# class palettes are pulled toward a common mid tone: mean color alone
# must not separate the classes, texture has to carry the signal
_PALETTE_MID = np.array([0.38, 0.44, 0.42])
_PALETTE_PULL = 0.55


def _jitter(rng, base, amount=0.12):
    return np.asarray(base) + rng.uniform(-amount, amount, 3)


def _scene_color(rng, base, amount=0.12):
    pulled = _PALETTE_MID + _PALETTE_PULL * (np.asarray(base) - _PALETTE_MID)
    return pulled + rng.uniform(-amount, amount, 3)


_MICRO_WRONG_CUE_P = 0.28


def _microtexture(rng, s, label):
    """Low-amplitude oriented grating carried by every pixel.

    Each class owns a grating orientation, but a quarter of the images
    draw a random one instead, so the cue is strong yet not sufficient
    on its own; the frequency band survives 2x downsampling.  The fog
    class (mist) gets no orientation of its own: fog can settle over
    any scene, so the veil itself has to carry its label.
    """
    if label == 3 or rng.random() < _MICRO_WRONG_CUE_P:
        angle = rng.uniform(0.0, np.pi)
    else:
        angle = np.deg2rad(label * 18.0 + rng.normal(0.0, 4.0))
    freq = rng.uniform(0.12, 0.19)
    amplitude = rng.uniform(0.05, 0.09)
    phase = rng.uniform(0, 2 * np.pi)
    yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    coord = np.cos(angle) * xx + np.sin(angle) * yy
    return amplitude * np.sin(2 * np.pi * freq * coord + phase)


def _atmosphere(rng, s, img):
    """Smooth atmospheric haze, any class: flat or depth-ramped.

    Every outdoor photograph carries some structureless haze, from thin
    to quite heavy, so scenes must stay in-class under it.  The veil is
    either constant or exp-saturating in the row index (depth) -- never
    varying within a row.  Only patchy fog with lateral structure is
    class evidence (the mist / clouds classes).
    """
    amount = rng.uniform(0.0, 0.25)
    if rng.random() < 0.5:
        band = np.full(s, amount)
    else:
        beta = rng.uniform(0.02, 0.25)
        ramp = np.linspace(0.0, 1.0, s)
        band = amount * (1.0 - np.exp(-beta * ramp)) / (1.0 - np.exp(-beta))
    tone = rng.uniform(0.80, 1.0)
    return img * (1 - band[:, None, None]) + tone * band[:, None, None]


def _finish(rng, img):
    """Shared post-processing: illumination jitter plus sensor noise.

    Global brightness varies a lot between scenes of the same class, so
    the classifier has to rely on hue and texture rather than absolute
    level; that keeps it honestly confusable.
    """
    img = img * rng.uniform(0.80, 1.12)
    img = img + rng.normal(0.0, rng.uniform(0.015, 0.035), img.shape)
    return img


def _render_stripes(rng, s, angle_deg, base, freq_lo, freq_hi):
    """Shared stripe-field generator; orientation is the class cue."""
    angle = np.deg2rad(angle_deg)
    spacing = s / rng.uniform(freq_lo, freq_hi)
    phase = rng.uniform(0, 2 * np.pi)
    yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    coord = np.cos(angle) * xx + np.sin(angle) * yy
    blend = 0.5 + 0.5 * np.sin(2 * np.pi * coord / spacing + phase)
    depthshade = rng.uniform(0.7, 1.0) + rng.uniform(0.0, 0.45) * blend
    img = np.tile(base, (s, s, 1)) * depthshade[:, :, None]
    img *= (0.8 + 0.4 * _value_noise(rng, s, int(rng.integers(4, 8))))[:, :, None]
    return img


def _veil(rng, s, img, amount_lo, amount_hi, cells_lo=3, cells_hi=6,
          sink_lo=0.0, sink_hi=0.0):
    """Blend patchy fog banks over a backdrop.

    Fog density varies strongly ALONG rows (banks and curtains seen
    side-on), which is what separates it from the smooth depth haze of a
    homogeneous atmosphere (constant within every row).  ``sink`` > 0
    additionally pulls the fog toward the lower image half (valley fog).
    """
    cols = int(rng.integers(max(cells_lo, 4), max(cells_hi, 5) + 3))
    rows = int(rng.integers(1, 3))
    coarse = rng.uniform(0.0, 1.0, size=(rows, cols))
    shape = resize_bilinear(coarse, s, s)
    threshold = rng.uniform(0.3, 0.5)
    amount = amount_lo + (amount_hi - amount_lo) * rng.random() ** 2
    mask = amount * _smoothstep(
        shape, threshold, threshold + rng.uniform(0.2, 0.4))
    sink = rng.uniform(sink_lo, sink_hi)
    if sink > 0:
        ramp = np.linspace(0.0, 1.0, s)[:, None]
        mask = mask * ((1.0 - sink) + sink * ramp)
    tone = rng.uniform(0.85, 1.0)
    return img * (1 - mask[:, :, None]) + tone * mask[:, :, None]


def _render_sand(rng, s):
    """Dune field: rippled tan ground with diagonal shading."""
    base = _scene_color(rng, [0.55, 0.47, 0.33])
    yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    dune_freq = rng.uniform(1.5, 3.5)
    dune_angle = rng.uniform(0.3, 1.2)
    dunes = 0.8 + 0.25 * np.sin(
        2 * np.pi * dune_freq * (np.cos(dune_angle) * xx + np.sin(dune_angle) * yy) / s)
    img = base[None, None, :] * dunes[:, :, None]
    img *= (0.8 + 0.4 * _value_noise(rng, s, int(rng.integers(4, 8))))[:, :, None]
    return img * rng.uniform(0.55, 0.8)


def _render_grass(rng, s):
    # near-vertical stripes; orientation tail overlaps the rows class
    base = _scene_color(rng, [0.24, 0.46, 0.20])
    angle = rng.normal(90.0, 12.0)
    return _render_stripes(rng, s, angle, base, 9.0, 22.0)


def _render_water(rng, s):
    # near-horizontal stripes
    base = _scene_color(rng, [0.16, 0.38, 0.52])
    angle = rng.normal(0.0, 10.0)
    img = _render_stripes(rng, s, angle, base, 5.0, 14.0)
    glint = rng.random((s, s)) < rng.uniform(0.0, 0.02)
    img[glint] = np.array([0.85, 0.95, 1.0]) * rng.uniform(0.8, 1.0)
    return img


def _render_rows(rng, s):
    # diagonal stripes; tails overlap grass (near-vertical) and water
    base = _scene_color(rng, [0.45, 0.47, 0.22])
    angle = rng.normal(45.0, 12.0)
    return _render_stripes(rng, s, angle, base, 6.0, 13.0)


def _render_mist(rng, s):
    """Patchy fog over an arbitrary backdrop scene.

    The backdrop is drawn from the other classes' scene layers, so the
    fog itself is the only thing that makes an image "mist" -- exactly
    like photos of any landscape taken in fog.
    """
    backdrop_label = int(rng.choice([0, 1, 2, 4, 5, 6, 7, 8, 9]))
    return _RENDERERS[backdrop_label](rng, s)


def _render_scrub(rng, s):
    """Scattered dark bushes on dry ground."""
    ground = _scene_color(rng, [0.45, 0.40, 0.28])
    img = np.tile(ground, (s, s, 1)) * rng.uniform(0.5, 0.75)
    img *= (0.8 + 0.4 * _value_noise(rng, s, int(rng.integers(4, 9))))[:, :, None]
    bush = np.array([0.10, 0.20, 0.10])
    n_bushes = int(rng.integers(6, 16))
    yy, xx = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    for _ in range(n_bushes):
        cy, cx = rng.uniform(0, s), rng.uniform(0, s)
        radius = rng.uniform(2.0, 6.0)
        blob = _smoothstep(-(np.hypot(yy - cy, xx - cx) - radius), -1.0, 1.0)
        shade = bush * rng.uniform(0.7, 1.3)
        img = img * (1 - blob[:, :, None]) + shade[None, None, :] * blob[:, :, None]
    return img


def _render_forest(rng, s):
    base = _scene_color(rng, [0.12, 0.28, 0.14], amount=0.08)
    img = np.tile(base, (s, s, 1))
    img *= (0.55 + 0.8 * _value_noise(rng, s, int(rng.integers(5, 10))))[:, :, None]
    n_trunks = int(rng.integers(2, 9))
    trunk = np.array([0.22, 0.15, 0.08])
    for _ in range(n_trunks):
        col = int(rng.integers(1, s - 2))
        width = int(rng.integers(1, 3))
        top = int(rng.integers(0, s // 3))
        img[top:, col:col + width, :] = trunk * rng.uniform(0.6, 1.3)
    # sparse bright speckles; the dense end of this is the night class
    speck = rng.random((s, s)) < rng.uniform(0.0, 0.008)
    img[speck] = rng.uniform(0.5, 0.9)
    return img


def _render_gravel(rng, s):
    """Scree / gravel bed: coarse dark stone speckle, high local contrast."""
    base = _scene_color(rng, [0.42, 0.33, 0.24], amount=0.08)
    img = np.tile(base, (s, s, 1))
    img *= (0.6 + 0.8 * _value_noise(rng, s, int(rng.integers(8, 16))))[:, :, None]
    # strong grain: gravel never looks washed out
    img *= (1.0 + rng.uniform(0.35, 0.55) * rng.standard_normal((s, s, 1)) * 0.35)
    n_stones = int(rng.integers(6, 16))
    for _ in range(n_stones):
        r, c = int(rng.integers(0, s - 3)), int(rng.integers(0, s - 3))
        sz = int(rng.integers(2, 5))
        img[r:r + sz, c:c + sz] *= rng.uniform(0.3, 0.6)
    return img * rng.uniform(0.6, 0.9)


def _render_pavers(rng, s):
    brick = _scene_color(rng, [0.55, 0.30, 0.22])
    mortar = _jitter(rng, [0.70, 0.67, 0.62], amount=0.08)
    bh = int(rng.integers(7, 12))
    bw = int(rng.integers(11, 17))
    img = np.tile(brick, (s, s, 1))
    cols_idx = np.arange(s)
    tone = rng.uniform(0.8, 1.2, size=(s // bh + 2, s // bw + 2))
    for r in range(s):
        band = r // bh
        offset = (band % 2) * (bw // 2)
        img[r] *= tone[band, (cols_idx + offset) // bw][:, None]
    img[np.arange(s) % bh == 0] = mortar
    for r in range(s):
        band = r // bh
        offset = (band % 2) * (bw // 2)
        img[r, (cols_idx + offset) % bw == 0] = mortar
    return img


def _render_rock(rng, s):
    """Fractured rock face: coarse high-contrast gray cells."""
    base = _scene_color(rng, [0.38, 0.35, 0.33], amount=0.08)
    cells = int(rng.integers(7, 14))
    pattern = _value_noise(rng, s, cells)
    shade = 0.35 + 0.9 * pattern
    img = np.tile(base, (s, s, 1)) * shade[:, :, None]
    # a few shadowed cracks
    n_cracks = int(rng.integers(2, 7))
    for _ in range(n_cracks):
        r = int(rng.integers(0, s - 1))
        thickness = int(rng.integers(1, 3))
        if rng.random() < 0.5:
            img[r:r + thickness, :, :] *= rng.uniform(0.4, 0.7)
        else:
            img[:, r:r + thickness, :] *= rng.uniform(0.4, 0.7)
    return img * rng.uniform(0.7, 1.0)


_RENDERERS = (
    _render_sand, _render_grass, _render_water, _render_mist, _render_forest,
    _render_pavers, _render_scrub, _render_rock, _render_rows, _render_gravel,
)


def render_example(label: int, index: int, seed: int = 0, size: int = 64) -> np.ndarray:
    """Render one corpus image deterministically.

    Composition: scene layer, optional atmospheric haze, class-keyed
    microtexture, illumination jitter and sensor noise, 8-bit quantize.
    """
    if not 0 <= label < len(CLASS_NAMES):
        raise ValueError(f"label {label} out of range")
    rng = np.random.default_rng([seed, label, index])
    img = _RENDERERS[label](rng, size)
    img = img + _microtexture(rng, size, label)[:, :, None]
    # atmosphere layers veil the complete scene radiance, texture included
    if rng.random() < 0.6:
        img = _atmosphere(rng, size, img)
    if label == 3:   # mist: marked low-lying fog patches define the class
        img = _veil(rng, size, img, 0.08, 0.32, sink_lo=0.5, sink_hi=0.9)
    elif rng.random() < 0.3:
        # trace fog below the mist/clouds threshold occurs in any scene
        img = _veil(rng, size, img, 0.0, 0.05, sink_lo=0.3, sink_hi=0.9)
    return _quantize(_finish(rng, img))


# fog scenes are over-represented relative to the other classes: they
# anchor the atmosphere-related decision boundary of the trained model
CLASS_SAMPLING_WEIGHTS = (1.0, 1.0, 1.0, 1.4, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


def _corpus_schedule(n_per_class: int):
    """Deterministic (label, index) order: interleaved, prefix-balanced."""
    counts = [int(round(n_per_class * w)) for w in CLASS_SAMPLING_WEIGHTS]
    schedule = []
    for index in range(max(counts)):
        for label in range(len(CLASS_NAMES)):
            if index < counts[label]:
                schedule.append((label, index))
    return schedule


def generate_examples(n_per_class: int, seed: int = 0,
                      size: int = 64) -> list[LabeledExample]:
    """In-memory corpus following the class sampling weights."""
    return [LabeledExample(image=render_example(label, index, seed, size),
                           label=label)
            for label, index in _corpus_schedule(n_per_class)]


@dataclass(frozen=True)
class CorpusItem:
    image_id: str
    path: Path
    label: int


def make_corpus(out_dir: str | Path, n_per_class: int, seed: int = 0,
                size: int = 64) -> list[CorpusItem]:
    """Write a corpus directory: PNG files plus a labels.json manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = []
    manifest = []
    for position, (label, index) in enumerate(_corpus_schedule(n_per_class)):
        name = f"{position:05d}_{CLASS_NAMES[label]}.png"
        save_image(render_example(label, index, seed, size), out_dir / name)
        manifest.append({"image": name, "label": label})
        items.append(CorpusItem(image_id=name, path=out_dir / name, label=label))
    payload = {"version": 1, "classes": list(CLASS_NAMES), "items": manifest}
    (out_dir / LABELS_FILENAME).write_text(json.dumps(payload, indent=2))
    return items


def load_corpus(corpus_dir: str | Path) -> list[CorpusItem]:
    """Read a corpus directory written by :func:`make_corpus`."""
    corpus_dir = Path(corpus_dir)
    labels_path = corpus_dir / LABELS_FILENAME
    if not labels_path.is_file():
        raise FileNotFoundError(f"no {LABELS_FILENAME} in {corpus_dir}")
    payload = json.loads(labels_path.read_text())
    items = []
    for entry in payload["items"]:
        path = corpus_dir / entry["image"]
        if not path.is_file():
            raise FileNotFoundError(f"corpus image missing: {path}")
        items.append(CorpusItem(image_id=entry["image"], path=path,
                                label=int(entry["label"])))
    return items


def load_examples(items: list[CorpusItem]) -> list[LabeledExample]:
    """Materialize corpus items as labeled in-memory examples."""
    return [LabeledExample(image=load_image(it.path), label=it.label)
            for it in items]
