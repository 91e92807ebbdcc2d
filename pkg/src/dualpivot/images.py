"""Image array helpers: PNG I/O, resizing, torch conversion, contact sheets.

Images are float64 numpy arrays of shape (H, W, C) with values in [0, 1]
everywhere outside the torch training/inference core.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .errors import InvalidArgumentError


def check_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate (H, W, C) shape and return as float64."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise InvalidArgumentError(f"{name} must have shape (H, W, C), got {x.shape}")
    return x.astype(np.float64, copy=False)


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit RGB PNG as float64 in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(x: np.ndarray, path: str | os.PathLike) -> None:
    """Save a [0,1] float image as 8-bit RGB PNG."""
    x = check_image(x)
    u8 = np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path)


def resize_bicubic(x: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bicubic resize to (H, W). Used for the resolution-restoring upsample."""
    x = check_image(x)
    h, w = size
    if (h, w) == x.shape[:2]:
        return x.copy()
    chans = []
    for c in range(x.shape[2]):
        im = Image.fromarray(x[:, :, c].astype(np.float32), mode="F")
        chans.append(np.asarray(im.resize((w, h), Image.BICUBIC), dtype=np.float64))
    return np.stack(chans, axis=2)


def area_downsample(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-average downsample to (out_h, out_w).

    Each output pixel averages the source box it covers, with fractional
    edge pixels weighted by overlap. For integer factors this is exact
    mean pooling.
    """
    x = check_image(x)
    h, w = x.shape[:2]
    if out_h > h or out_w > w:
        raise InvalidArgumentError("area_downsample cannot upsample")
    ay = _box_weights(h, out_h)
    ax = _box_weights(w, out_w)
    return np.einsum("ij,jkc,lk->ilc", ay, x, ax, optimize=True)


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix of box-overlap weights."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / w.sum(axis=1, keepdims=True)


def to_torch(x: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, C) or (B, H, W, C) numpy image -> (B, C, H, W) torch tensor."""
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise InvalidArgumentError(f"expected 3- or 4-d image array, got {x.shape}")
    return torch.from_numpy(np.ascontiguousarray(x.transpose(0, 3, 1, 2))).to(dtype)


def from_torch(t: torch.Tensor) -> np.ndarray:
    """(B, C, H, W) tensor -> (B, H, W, C) float64 array."""
    return t.detach().cpu().numpy().astype(np.float64).transpose(0, 2, 3, 1)


def contact_sheet(
    rows: Sequence[Sequence[np.ndarray]],
    path: str | os.PathLike,
    pad: int = 2,
) -> None:
    """Write a grid of [0,1] images (one inner sequence per row) as a PNG."""
    if not rows or not rows[0]:
        raise InvalidArgumentError("contact_sheet needs at least one image")
    cell_h = max(img.shape[0] for r in rows for img in r)
    cell_w = max(img.shape[1] for r in rows for img in r)
    n_cols = max(len(r) for r in rows)
    sheet = np.ones(
        (len(rows) * (cell_h + pad) + pad, n_cols * (cell_w + pad) + pad, 3)
    )
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            img = check_image(img)
            y = pad + i * (cell_h + pad)
            x = pad + j * (cell_w + pad)
            sheet[y : y + img.shape[0], x : x + img.shape[1]] = img
    save_image(np.clip(sheet, 0.0, 1.0), path)
