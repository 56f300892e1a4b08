"""Image quality metrics (MSE / PSNR / SSIM) and test-set evaluation.

Metrics operate on the denormalized 8-bit scale [0, 255] so numbers line
up with the cloud-removal literature. SSIM uses uniform 8x8 sliding
windows (stride 1) on the BT.601 luma, with population moments; that
choice keeps it exactly checkable against a direct per-window oracle.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import CheckpointState
from .data import DatasetError, ImagePair, denormalize, save_image_rgb
from .errors import ConfigError
from .model import foreground_mask
from .tensor import ShapeError, Tensor

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference; inputs already on the [0, 255] scale."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: shape {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / mse) in dB, capped at 99.0 for identical inputs."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * math.log10(255.0 ** 2 / err))


def _luma(rgb_chw: np.ndarray) -> np.ndarray:
    r, g, b = rgb_chw.astype(np.float64)
    return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b


def _window_sums(x: np.ndarray, k: int) -> np.ndarray:
    """Sum of every k x k window (stride 1) via an integral image."""
    ii = np.zeros((x.shape[0] + 1, x.shape[1] + 1), dtype=np.float64)
    ii[1:, 1:] = np.cumsum(np.cumsum(x, axis=0), axis=1)
    return ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]


def ssim(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW) -> float:
    """Mean structural similarity over all sliding windows of the luma.

    Inputs are RGB (3, H, W) arrays on the [0, 255] scale.
    """
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shape {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[0] != 3:
        raise ShapeError(f"ssim: expects RGB (3, H, W), got {a.shape}")
    h, w = a.shape[1], a.shape[2]
    if h < window or w < window:
        raise ShapeError(f"ssim: image {h}x{w} smaller than {window}x{window} window")

    la, lb = _luma(a), _luma(b)
    n = float(window * window)
    sa = _window_sums(la, window)
    sb = _window_sums(lb, window)
    saa = _window_sums(la * la, window)
    sbb = _window_sums(lb * lb, window)
    sab = _window_sums(la * lb, window)

    mu_a = sa / n
    mu_b = sb / n
    var_a = saa / n - mu_a * mu_a
    var_b = sbb / n - mu_b * mu_b
    cov = sab / n - mu_a * mu_b

    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


@dataclass
class MetricsReport:
    config_hash: str
    split: list[str]
    per_image: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "split": self.split,
            "per_image": self.per_image,
            "summary": self.summary,
            "baseline": self.baseline,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def config_hash(cfg_dict: dict) -> str:
    blob = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def _summarize(rows: list[dict], keys=("mse", "psnr_db", "ssim")) -> dict:
    out: dict[str, float] = {}
    for key in keys:
        values = np.array([row[key] for row in rows], dtype=np.float64)
        out[f"{key}_mean"] = float(values.mean())
        out[f"{key}_std"] = float(values.std())
    return out


_HEAT_T = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_HEAT_RGB = np.array([
    [8, 4, 28],      # near black
    [96, 18, 105],   # purple
    [204, 64, 44],   # red
    [249, 182, 24],  # amber
    [252, 252, 210], # near white
], dtype=np.float64)


def heatmap_rgb(mask01: np.ndarray) -> np.ndarray:
    """Render a [0, 1] map as an (H, W, 3) uint8 heat image."""
    t = np.clip(mask01, 0.0, 1.0)
    channels = [np.interp(t, _HEAT_T, _HEAT_RGB[:, c]) for c in range(3)]
    return np.rint(np.stack(channels, axis=-1)).astype(np.uint8)


def render_grid(rows: list[list[np.ndarray]], sep: int = 2) -> np.ndarray:
    """Compose (H, W, 3) uint8 panels into one grid with white separators."""
    h, w = rows[0][0].shape[:2]
    n_rows, n_cols = len(rows), len(rows[0])
    grid = np.full(
        (n_rows * h + (n_rows - 1) * sep, n_cols * w + (n_cols - 1) * sep, 3),
        255, dtype=np.uint8,
    )
    for r, row in enumerate(rows):
        for c, panel in enumerate(row):
            top, left = r * (h + sep), c * (w + sep)
            grid[top:top + h, left:left + w] = panel
    return grid


def evaluate(state: CheckpointState, pairs: list[ImagePair],
             report_path: str | None = None,
             grid_path: str | None = None) -> MetricsReport:
    """Run the cloudy->clear generator over test pairs and score it.

    Per pair the report holds metrics(generated, clean) next to the
    model-independent baseline metrics(cloudy, clean). The grid PNG shows
    [cloudy | clean | generated | foreground-attention heat-map] per row.
    """
    if not pairs:
        raise DatasetError("no test pairs")
    size = state.model.cfg.image_size
    for pair in pairs:
        if pair.cloudy.shape != (3, size, size):
            raise ConfigError(
                f"pair {pair.id}: shape {pair.cloudy.shape} does not match "
                f"checkpoint image_size {size}"
            )

    rows = []
    panels = []
    for pair in pairs:
        out = state.model.gen_xy(Tensor(pair.cloudy[None]))
        gen_u8 = denormalize(out.fused.data[0])
        clean_u8 = denormalize(pair.clean)
        cloudy_u8 = denormalize(pair.cloudy)

        gen_mse = mse(gen_u8, clean_u8)
        base_mse = mse(cloudy_u8, clean_u8)
        rows.append({
            "id": pair.id,
            "mse": gen_mse,
            "psnr_db": PSNR_CAP_DB if gen_mse == 0 else 10 * math.log10(255.0 ** 2 / gen_mse),
            "ssim": ssim(gen_u8, clean_u8),
            "baseline_mse": base_mse,
            "baseline_psnr_db": PSNR_CAP_DB if base_mse == 0 else 10 * math.log10(255.0 ** 2 / base_mse),
            "baseline_ssim": ssim(cloudy_u8, clean_u8),
        })
        fg = foreground_mask(out.attention).data[0, 0]
        panels.append([
            cloudy_u8.transpose(1, 2, 0),
            clean_u8.transpose(1, 2, 0),
            gen_u8.transpose(1, 2, 0),
            heatmap_rgb(fg),
        ])

    report = MetricsReport(
        config_hash=config_hash(state.model.cfg.to_dict()),
        split=[pair.id for pair in pairs],
        per_image=rows,
        summary=_summarize(rows),
        baseline=_summarize(
            [{"mse": r["baseline_mse"], "psnr_db": r["baseline_psnr_db"],
              "ssim": r["baseline_ssim"]} for r in rows]
        ),
    )
    if report_path:
        report.save(report_path)
    if grid_path:
        os.makedirs(os.path.dirname(grid_path) or ".", exist_ok=True)
        save_image_rgb(grid_path, render_grid(panels))
    return report
