"""Paired-dataset ingestion, splitting, and the augmentation recipe.

Datasets live on disk in the RICE layout: `cloud/` and `label/`
subdirectories holding identically named 8-bit RGB PNGs (plus an optional
`alpha/` written by the synthetic generator). In memory a pair is two
float32 arrays of shape (3, H, W) in [-1, 1].
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
AUGMENT_KINDS = ("rot90", "rot180", "rot270", "flip_h", "flip_v", "crop", "bg_color_shift")

CROP_SCALE_RANGE = (0.75, 1.0)
BG_GAIN_RANGE = (0.8, 1.2)


class DatasetError(ValueError):
    """Raised for unusable dataset contents."""


class ManifestError(DatasetError):
    """Raised when the directory layout and manifest disagree."""


class DecodeError(DatasetError):
    """Raised for undecodable or non-RGB image files."""


@dataclass
class ImagePair:
    id: str
    cloudy: np.ndarray  # (3, H, W) float32 in [-1, 1]
    clean: np.ndarray   # same shape as cloudy

    def __post_init__(self):
        if self.cloudy.shape != self.clean.shape:
            raise DatasetError(
                f"pair {self.id}: cloudy shape {self.cloudy.shape} vs clean {self.clean.shape}"
            )


@dataclass
class DatasetManifest:
    root: str
    ids: list[str]
    image_size: int | None = None
    train_ids: list[str] = field(default_factory=list)
    test_ids: list[str] = field(default_factory=list)
    seed: int | None = None
    provenance: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ManifestError(f"train/test overlap: {sorted(overlap)[:5]}")

    def to_dict(self) -> dict:
        return {
            "ids": self.ids,
            "image_size": self.image_size,
            "split": {"train": self.train_ids, "test": self.test_ids},
            "seed": self.seed,
            "provenance": self.provenance,
        }

    def save(self, path: str | None = None) -> str:
        path = path or os.path.join(self.root, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    @classmethod
    def from_dict(cls, root: str, d: dict) -> "DatasetManifest":
        split_d = d.get("split", {})
        return cls(
            root=root,
            ids=list(d.get("ids", [])),
            image_size=d.get("image_size"),
            train_ids=list(split_d.get("train", [])),
            test_ids=list(split_d.get("test", [])),
            seed=d.get("seed"),
            provenance=dict(d.get("provenance", {})),
        )


def normalize(u8: np.ndarray) -> np.ndarray:
    """Map 8-bit values to [-1, 1] as v / 127.5 - 1."""
    return (u8.astype(np.float32) / np.float32(127.5)) - np.float32(1.0)


def denormalize(arr: np.ndarray) -> np.ndarray:
    """Inverse of `normalize`: clamp, scale to [0, 255], round to uint8."""
    clipped = np.clip(arr, -1.0, 1.0)
    return np.rint((clipped + 1.0) * 127.5).astype(np.uint8)


def load_image_rgb(path: str) -> np.ndarray:
    """Decode an 8-bit RGB PNG into a (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                raise DecodeError(f"{path}: expected 8-bit RGB, got mode {img.mode!r}")
            return np.asarray(img, dtype=np.uint8)
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc


def save_image_rgb(path: str, hwc_u8: np.ndarray) -> None:
    Image.fromarray(hwc_u8, mode="RGB").save(path, format="PNG")


def _resize_area_u8(hwc: np.ndarray, size: int) -> np.ndarray:
    """Area-average resize of an 8-bit image (identity if already sized)."""
    if hwc.shape[0] == size and hwc.shape[1] == size:
        return hwc
    img = Image.fromarray(hwc, mode="RGB").resize((size, size), Image.BOX)
    return np.asarray(img, dtype=np.uint8)


def _to_chw(hwc_u8: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(normalize(hwc_u8).transpose(2, 0, 1))


def to_hwc_u8(chw: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(denormalize(chw).transpose(1, 2, 0))


def _load_side(root: str, sub: str, pid: str, image_size: int | None) -> np.ndarray:
    hwc = load_image_rgb(os.path.join(root, sub, pid + ".png"))
    if image_size is not None:
        hwc = _resize_area_u8(hwc, image_size)
    return _to_chw(hwc)


def load_dataset(root: str, image_size: int | None = None
                 ) -> tuple[DatasetManifest, list[ImagePair]]:
    """Load every (cloud, label) PNG pair under `root`.

    Pairs are matched by filename stem; a stem present on only one side is
    a manifest error. An existing manifest.json contributes the split and
    provenance. `image_size=None` keeps the native resolution.
    """
    cloud_dir = os.path.join(root, "cloud")
    label_dir = os.path.join(root, "label")
    if not os.path.isdir(cloud_dir) or not os.path.isdir(label_dir):
        raise ManifestError(f"{root}: expected cloud/ and label/ subdirectories")

    cloud_ids = {os.path.splitext(f)[0] for f in os.listdir(cloud_dir) if f.endswith(".png")}
    label_ids = {os.path.splitext(f)[0] for f in os.listdir(label_dir) if f.endswith(".png")}
    mismatched = sorted(cloud_ids ^ label_ids)
    if mismatched:
        pid = mismatched[0]
        side = "label" if pid in cloud_ids else "cloud"
        raise ManifestError(f"pair {pid!r} has no {side}/ counterpart")
    ids = sorted(cloud_ids)
    if not ids:
        raise DatasetError(f"{root}: no pairs found")

    pairs = [
        ImagePair(pid,
                  _load_side(root, "cloud", pid, image_size),
                  _load_side(root, "label", pid, image_size))
        for pid in ids
    ]

    manifest_path = os.path.join(root, MANIFEST_NAME)
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as f:
            manifest = DatasetManifest.from_dict(root, json.load(f))
        known = set(ids)
        stale = [pid for pid in manifest.train_ids + manifest.test_ids if pid not in known]
        if stale:
            raise ManifestError(f"manifest names missing pairs: {stale[:5]}")
        manifest.ids = ids
        manifest.image_size = image_size if image_size is not None else pairs[0].cloudy.shape[1]
    else:
        manifest = DatasetManifest(
            root=root, ids=ids,
            image_size=image_size if image_size is not None else pairs[0].cloudy.shape[1],
        )
    return manifest, pairs


def split(manifest: DatasetManifest, train_count: int, seed: int) -> DatasetManifest:
    """Deterministic shuffled train/test split of the manifest ids."""
    n = len(manifest.ids)
    if train_count > n or train_count < 0:
        raise DatasetError(f"train_count {train_count} out of range for {n} pairs")
    if train_count == n:
        log.warning("split: train_count equals dataset size; test set is empty")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [manifest.ids[i] for i in order]
    return DatasetManifest(
        root=manifest.root,
        ids=list(manifest.ids),
        image_size=manifest.image_size,
        train_ids=shuffled[:train_count],
        test_ids=shuffled[train_count:],
        seed=seed,
        provenance=dict(manifest.provenance),
    )


def default_train_count(n: int) -> int:
    """The 9:1 split ratio of the reference dataset (500 -> 450)."""
    return max(1, n * 9 // 10)


def select_pairs(pairs: list[ImagePair], ids: list[str]) -> list[ImagePair]:
    by_id = {p.id: p for p in pairs}
    return [by_id[i] for i in ids]


# ---------------------------------------------------------------------------
# augmentation


def resize_bilinear_chw(chw: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers, float in/out."""
    c, h, w = chw.shape
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[None, :, None]
    wx = (xs - x0).astype(np.float32)[None, None, :]
    top = chw[:, y0][:, :, x0] * (1 - wx) + chw[:, y0][:, :, x1] * wx
    bot = chw[:, y1][:, :, x0] * (1 - wx) + chw[:, y1][:, :, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def _geometric(chw: np.ndarray, kind: str) -> np.ndarray:
    if kind == "rot90":
        return np.ascontiguousarray(np.rot90(chw, 1, axes=(1, 2)))
    if kind == "rot180":
        return np.ascontiguousarray(np.rot90(chw, 2, axes=(1, 2)))
    if kind == "rot270":
        return np.ascontiguousarray(np.rot90(chw, 3, axes=(1, 2)))
    if kind == "flip_h":
        return np.ascontiguousarray(chw[:, :, ::-1])
    if kind == "flip_v":
        return np.ascontiguousarray(chw[:, ::-1, :])
    raise AssertionError(kind)


def _crop_params(rng: np.random.Generator, h: int, w: int):
    scale = rng.uniform(*CROP_SCALE_RANGE)
    size = max(1, int(round(min(h, w) * scale)))
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return top, left, size


def _apply_crop(chw: np.ndarray, top: int, left: int, size: int) -> np.ndarray:
    window = chw[:, top:top + size, left:left + size]
    return resize_bilinear_chw(window, chw.shape[1], chw.shape[2])


def _apply_bg_gain(chw: np.ndarray, gains: np.ndarray) -> np.ndarray:
    # gains act on the [0, 1] brightness scale, then values are re-clamped
    v01 = (chw + 1.0) * 0.5
    v01 = np.clip(v01 * gains[:, None, None], 0.0, 1.0)
    return (v01 * 2.0 - 1.0).astype(np.float32)


def apply_augment(pair: ImagePair, kind: str, rng: np.random.Generator
                  ) -> tuple[ImagePair, dict]:
    """One augmented variant of a pair; both members share the parameters."""
    if kind in ("rot90", "rot180", "rot270", "flip_h", "flip_v"):
        out = ImagePair(f"{pair.id}__{kind}",
                        _geometric(pair.cloudy, kind), _geometric(pair.clean, kind))
        return out, {"source": pair.id, "op": kind}
    if kind == "crop":
        _, h, w = pair.cloudy.shape
        top, left, size = _crop_params(rng, h, w)
        out = ImagePair(f"{pair.id}__crop",
                        _apply_crop(pair.cloudy, top, left, size),
                        _apply_crop(pair.clean, top, left, size))
        return out, {"source": pair.id, "op": kind, "top": top, "left": left, "size": size}
    if kind == "bg_color_shift":
        gains = rng.uniform(*BG_GAIN_RANGE, size=3).astype(np.float32)
        out = ImagePair(f"{pair.id}__bg_color_shift",
                        _apply_bg_gain(pair.cloudy, gains),
                        _apply_bg_gain(pair.clean, gains))
        return out, {"source": pair.id, "op": kind, "gains": [float(g) for g in gains]}
    raise DatasetError(f"unknown augmentation op {kind!r}; known: {', '.join(AUGMENT_KINDS)}")


def augment(pairs: list[ImagePair], ops: list[str], seed: int
            ) -> tuple[list[ImagePair], dict[str, dict]]:
    """Originals plus one variant per (pair, op): N * (1 + len(ops)) pairs.

    Returns the expanded list and the per-id provenance of the variants.
    """
    for kind in ops:
        if kind not in AUGMENT_KINDS:
            raise DatasetError(f"unknown augmentation op {kind!r}; known: {', '.join(AUGMENT_KINDS)}")
    rng = np.random.default_rng(seed)
    out = list(pairs)
    provenance: dict[str, dict] = {}
    for kind in ops:
        for pair in pairs:
            variant, prov = apply_augment(pair, kind, rng)
            out.append(variant)
            provenance[variant.id] = prov
    return out, provenance


def write_dataset(root: str, pairs: list[ImagePair],
                  manifest: DatasetManifest | None = None) -> DatasetManifest:
    """Materialize pairs to cloud/ + label/ PNGs plus a manifest."""
    os.makedirs(os.path.join(root, "cloud"), exist_ok=True)
    os.makedirs(os.path.join(root, "label"), exist_ok=True)
    for pair in pairs:
        save_image_rgb(os.path.join(root, "cloud", pair.id + ".png"), to_hwc_u8(pair.cloudy))
        save_image_rgb(os.path.join(root, "label", pair.id + ".png"), to_hwc_u8(pair.clean))
    if manifest is None:
        manifest = DatasetManifest(
            root=root, ids=[p.id for p in pairs],
            image_size=pairs[0].cloudy.shape[1] if pairs else None,
        )
    manifest.root = root
    manifest.save()
    return manifest
