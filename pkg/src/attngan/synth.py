"""Deterministic procedural cloudy-scene generator.

Produces (clean, cloudy, alpha) triples where the ground truth is exact:
clean terrain comes from multi-octave value noise pushed through a
green-brown-blue palette, the cloud layer is thresholded fractal noise,
and cloudy = alpha * white + (1 - alpha) * clean. Having the alpha on
disk lets tests verify the blend pixel-for-pixel.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .data import DatasetManifest, save_image_rgb


def _smootherstep(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6 - 15) + 10)


def smoothstep(edge0: float, edge1: float, x: np.ndarray) -> np.ndarray:
    t = np.clip((x - edge0) / (edge1 - edge0), 0.0, 1.0)
    return t * t * (3 - 2 * t)


def value_noise(h: int, w: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    """Smoothly interpolated lattice noise in [0, 1], `cells` per axis."""
    cells = max(1, cells)
    lattice = rng.random((cells + 1, cells + 1))
    ys = np.linspace(0, cells, h, endpoint=False)
    xs = np.linspace(0, cells, w, endpoint=False)
    yi = np.floor(ys).astype(int)
    xi = np.floor(xs).astype(int)
    ty = _smootherstep(ys - yi)[:, None]
    tx = _smootherstep(xs - xi)[None, :]
    v00 = lattice[np.ix_(yi, xi)]
    v01 = lattice[np.ix_(yi, xi + 1)]
    v10 = lattice[np.ix_(yi + 1, xi)]
    v11 = lattice[np.ix_(yi + 1, xi + 1)]
    top = v00 + tx * (v01 - v00)
    bot = v10 + tx * (v11 - v10)
    return top + ty * (bot - top)


def fbm(h: int, w: int, octaves: int, base_cells: int, rng: np.random.Generator,
        persistence: float = 0.5, lacunarity: float = 2.0) -> np.ndarray:
    """Fractal (multi-octave) value noise, normalized to [0, 1]."""
    total = np.zeros((h, w))
    amplitude = 1.0
    norm = 0.0
    cells = base_cells
    for _ in range(octaves):
        total += amplitude * value_noise(h, w, int(round(cells)), rng)
        norm += amplitude
        amplitude *= persistence
        cells *= lacunarity
    return total / norm


# palette stops: water blues through shore sand into vegetation greens/browns
_PALETTE_T = np.array([0.00, 0.32, 0.42, 0.50, 0.62, 0.78, 1.00])
_PALETTE_RGB = np.array([
    [13, 41, 98],     # deep water
    [36, 84, 153],    # shallow water
    [180, 166, 122],  # shoreline sand
    [96, 134, 66],    # grassland
    [52, 102, 48],    # forest
    [94, 82, 56],     # highland brown
    [142, 130, 110],  # rocky summit
], dtype=np.float64)


def terrain_rgb(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Procedural terrain texture as a (H, W, 3) float array in [0, 255]."""
    height = fbm(h, w, octaves=5, base_cells=3, rng=rng)
    detail = fbm(h, w, octaves=3, base_cells=6, rng=rng)
    channels = [np.interp(height, _PALETTE_T, _PALETTE_RGB[:, c]) for c in range(3)]
    rgb = np.stack(channels, axis=-1)
    rgb *= (0.82 + 0.36 * detail)[..., None]
    return np.clip(rgb, 0, 255)


def cloud_alpha(h: int, w: int, rng: np.random.Generator,
                cover_low: float, cover_high: float) -> np.ndarray:
    """Cloud opacity in [0, 1]: fractal noise through a smoothstep threshold."""
    layer = fbm(h, w, octaves=4, base_cells=2, rng=rng)
    return smoothstep(cover_low, cover_high, layer)


def synth_dataset(count: int, image_size: int, seed: int, out: str,
                  cover_low: float = 0.48, cover_high: float = 0.62) -> DatasetManifest:
    """Write `count` synthetic pairs in the RICE layout under `out`.

    Per id the files are cloud/<id>.png, label/<id>.png, and
    alpha/<id>.png (8-bit grayscale opacity for test oracles). The blend
    uses the quantized alpha and clean images, so
    cloudy = alpha*255 + (1-alpha)*clean holds to 8-bit rounding.
    Deterministic given (count, image_size, seed).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    for sub in ("cloud", "label", "alpha"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)

    ids = []
    width = max(4, len(str(count - 1)))
    for index in range(count):
        rng = np.random.default_rng([seed, index])
        pid = f"synth_{index:0{width}d}"
        ids.append(pid)

        clean_u8 = np.rint(terrain_rgb(image_size, image_size, rng)).astype(np.uint8)
        alpha = cloud_alpha(image_size, image_size, rng, cover_low, cover_high)
        alpha_u8 = np.rint(alpha * 255).astype(np.uint8)

        a = alpha_u8.astype(np.float64)[..., None] / 255.0
        cloudy_u8 = np.rint(a * 255.0 + (1.0 - a) * clean_u8.astype(np.float64)).astype(np.uint8)

        save_image_rgb(os.path.join(out, "label", pid + ".png"), clean_u8)
        save_image_rgb(os.path.join(out, "cloud", pid + ".png"), cloudy_u8)
        Image.fromarray(alpha_u8, mode="L").save(os.path.join(out, "alpha", pid + ".png"), format="PNG")

    manifest = DatasetManifest(root=out, ids=ids, image_size=image_size, seed=seed)
    manifest.save()
    return manifest
