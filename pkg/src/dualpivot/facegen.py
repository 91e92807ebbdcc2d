"""Procedural face dataset with known ground-truth identity vectors.

Faces are layered anti-aliased 2-D primitives (ellipses, discs, capsules)
whose geometry and colors are driven by a 12-component identity vector, so
identity distance has an objective, embedder-independent definition. A
nuisance spec adds pose/lighting-style variation (shift, rotation,
brightness, background) without touching identity.
"""

from __future__ import annotations

import colorsys
import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .images import load_image, save_image

ID_DIM = 12
REFS_PER_IDENTITY = 10

# Identity vector layout:
#  0 face half-width     1 face half-height   2 face hue       3 skin lightness
#  4 eye spacing         5 eye size           6 eye (iris) hue 7 nose length
#  8 mouth half-width    9 mouth curvature   10 brow angle    11 hair hue


@dataclass(frozen=True)
class IdentitySpec:
    id_vector: np.ndarray
    label: int

    def __post_init__(self):
        v = np.asarray(self.id_vector, dtype=np.float64)
        if v.shape != (ID_DIM,) or np.any(v < 0.0) or np.any(v > 1.0):
            raise InvalidArgumentError(f"id_vector must be {ID_DIM} floats in [0,1]")
        object.__setattr__(self, "id_vector", v)


@dataclass(frozen=True)
class NuisanceSpec:
    tx: float = 0.0  # px, [-4, 4]
    ty: float = 0.0  # px, [-4, 4]
    rot_deg: float = 0.0  # [-10, 10]
    brightness: float = 0.0  # [-0.1, 0.1]
    bg_hue: float = 0.6  # [0, 1]

    def __post_init__(self):
        if abs(self.tx) > 4.0 or abs(self.ty) > 4.0:
            raise InvalidArgumentError("translation must be within +/-4 px")
        if abs(self.rot_deg) > 10.0:
            raise InvalidArgumentError("rotation must be within +/-10 degrees")
        if abs(self.brightness) > 0.1:
            raise InvalidArgumentError("brightness must be within +/-0.1")
        if not 0.0 <= self.bg_hue <= 1.0:
            raise InvalidArgumentError("bg_hue must be in [0, 1]")


def sample_identity(rng: np.random.Generator, label: int = 0) -> IdentitySpec:
    return IdentitySpec(id_vector=rng.uniform(0.0, 1.0, size=ID_DIM), label=label)


def sample_nuisance(rng: np.random.Generator) -> NuisanceSpec:
    return NuisanceSpec(
        tx=float(rng.uniform(-4.0, 4.0)),
        ty=float(rng.uniform(-4.0, 4.0)),
        rot_deg=float(rng.uniform(-10.0, 10.0)),
        brightness=float(rng.uniform(-0.1, 0.1)),
        bg_hue=float(rng.uniform(0.0, 1.0)),
    )


def _hsv(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v))


def _paint(img: np.ndarray, cov: np.ndarray, color: np.ndarray) -> None:
    img *= (1.0 - cov)[:, :, None]
    img += cov[:, :, None] * color[None, None, :]


def _cov(d_px: np.ndarray) -> np.ndarray:
    """Signed pixel distance -> anti-aliased coverage."""
    return np.clip(0.5 - d_px, 0.0, 1.0)


def _ellipse_d(px, py, cx, cy, a, b):
    f = np.sqrt(((px - cx) / a) ** 2 + ((py - cy) / b) ** 2) - 1.0
    return f * min(a, b)


def _disc_d(px, py, cx, cy, r):
    return np.hypot(px - cx, py - cy) - r


def _segment_d(px, py, x0, y0, x1, y1, thick):
    vx, vy = x1 - x0, y1 - y0
    ln2 = vx * vx + vy * vy
    if ln2 == 0.0:
        return np.hypot(px - x0, py - y0) - thick
    t = np.clip(((px - x0) * vx + (py - y0) * vy) / ln2, 0.0, 1.0)
    return np.hypot(px - (x0 + t * vx), py - (y0 + t * vy)) - thick


def render_face(ident: IdentitySpec, nu: NuisanceSpec, size: int = 64) -> np.ndarray:
    """Rasterize one face. Deterministic: same (ident, nu, size) -> same bits."""
    if size < 32:
        raise InvalidArgumentError(f"size must be >= 32, got {size}")
    v = ident.id_vector
    a = 0.21 + 0.09 * v[0]
    b = 0.26 + 0.10 * v[1]
    skin = _hsv(0.02 + 0.14 * v[2], 0.32, 0.55 + 0.38 * v[3])
    eye_dx = (0.34 + 0.38 * v[4]) * a
    eye_r = 0.050 + 0.042 * v[5]
    iris = _hsv(v[6], 0.78, 0.45)
    nose_len = 0.05 + 0.09 * v[7]
    mouth_w = 0.055 + 0.085 * v[8]
    mouth_curve = -0.045 + 0.08 * v[9]
    brow_ang = np.deg2rad(-20.0 + 40.0 * v[10])
    hair = _hsv(v[11], 0.65, 0.40)

    cx, cy = 0.5, 0.53
    # Pixel-centre grid in canvas units, then the inverse nuisance transform.
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    py = (ii + 0.5) / size - nu.ty / size
    px = (jj + 0.5) / size - nu.tx / size
    th = np.deg2rad(nu.rot_deg)
    rx = np.cos(-th) * (px - cx) - np.sin(-th) * (py - cy) + cx
    ry = np.sin(-th) * (px - cx) + np.cos(-th) * (py - cy) + cy
    px, py = rx, ry

    img = np.empty((size, size, 3))
    img[:] = _hsv(nu.bg_hue, 0.25, 0.85)[None, None, :]

    # Hair cap: enlarged ellipse showing above/around the face.
    _paint(img, _cov(_ellipse_d(px, py, cx, cy - 0.03, a * 1.16, b * 1.12) * size), hair)
    _paint(img, _cov(_ellipse_d(px, py, cx, cy, a, b) * size), skin)

    eye_y = cy - 0.42 * b
    for sgn in (-1.0, 1.0):
        ex = cx + sgn * eye_dx
        _paint(
            img,
            _cov(_ellipse_d(px, py, ex, eye_y, eye_r * 1.30, eye_r * 0.90) * size),
            np.array([0.96, 0.96, 0.96]),
        )
        _paint(img, _cov(_disc_d(px, py, ex, eye_y, eye_r * 0.58) * size), iris)
        _paint(
            img,
            _cov(_disc_d(px, py, ex, eye_y, eye_r * 0.26) * size),
            np.array([0.05, 0.05, 0.05]),
        )
        # Brow: tilted capsule above the eye (tilt mirrored left/right).
        bl = eye_r * 1.35
        by = eye_y - eye_r * 1.9
        dx_, dy_ = bl * np.cos(brow_ang), bl * np.sin(brow_ang)
        _paint(
            img,
            _cov(
                _segment_d(px, py, ex - dx_, by + sgn * dy_, ex + dx_, by - sgn * dy_, 0.009)
                * size
            ),
            hair * 0.55,
        )

    nose_top = cy - 0.02
    _paint(
        img,
        _cov(_segment_d(px, py, cx, nose_top, cx, nose_top + nose_len, 0.011) * size),
        skin * 0.78,
    )

    mouth_y = cy + 0.62 * b
    xs = np.linspace(-1.0, 1.0, 9)
    pts = [(cx + mouth_w * x, mouth_y + mouth_curve * (x * x - 0.5)) for x in xs]
    d_mouth = np.full((size, size), np.inf)
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        d_mouth = np.minimum(d_mouth, _segment_d(px, py, x0, y0, x1, y1, 0.012))
    _paint(img, _cov(d_mouth * size), np.array([0.55, 0.18, 0.18]))

    img += nu.brightness
    return np.clip(img, 0.0, 1.0)


@dataclass
class DatasetRecord:
    label: int
    index: int
    split: str  # "ref" | "test"
    file: str
    id_vector: list[float]
    nuisance: dict
    seed_lineage: list[int]


@dataclass
class FaceDataset:
    """In-memory view of a generated dataset directory."""

    root: Path
    manifest: dict
    records: list[DatasetRecord] = field(init=False)

    def __post_init__(self):
        self.records = [DatasetRecord(**r) for r in self.manifest["records"]]

    @property
    def labels(self) -> list[int]:
        return sorted({r.label for r in self.records})

    @property
    def image_size(self) -> int:
        return int(self.manifest["size"])

    def of(self, label: int, split: str | None = None) -> list[DatasetRecord]:
        return [
            r
            for r in self.records
            if r.label == label and (split is None or r.split == split)
        ]

    def split(self, split: str) -> list[DatasetRecord]:
        return [r for r in self.records if r.split == split]

    def image(self, rec: DatasetRecord) -> np.ndarray:
        return load_image(self.root / rec.file)

    def identity(self, label: int) -> IdentitySpec:
        rec = next(r for r in self.records if r.label == label)
        return IdentitySpec(id_vector=np.array(rec.id_vector), label=label)


def make_dataset(
    n_ids: int,
    per_id: int,
    size: int,
    root_seed: int,
    out_dir: str | os.PathLike,
) -> FaceDataset:
    """Render n_ids x per_id faces into out_dir with a reproducible manifest.

    The first min(10, per_id) images of each identity are marked "ref"
    (the personalization references); the rest are "test". Identity i's
    vector and nuisances come from an rng seeded by (root_seed, i), so any
    subset regenerates identically.
    """
    if n_ids < 1 or per_id < 1:
        raise InvalidArgumentError("n_ids and per_id must be >= 1")
    root = Path(out_dir)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create dataset directory {root}: {e}") from e
    records = []
    for i in range(n_ids):
        rng = np.random.default_rng(np.random.SeedSequence([root_seed, i]))
        ident = sample_identity(rng, label=i)
        (root / "images" / f"{i:03d}").mkdir(exist_ok=True)
        for j in range(per_id):
            nu = sample_nuisance(rng)
            img = render_face(ident, nu, size)
            rel = f"images/{i:03d}/{j:02d}.png"
            save_image(img, root / rel)
            records.append(
                DatasetRecord(
                    label=i,
                    index=j,
                    split="ref" if j < min(REFS_PER_IDENTITY, per_id) else "test",
                    file=rel,
                    id_vector=[float(x) for x in ident.id_vector],
                    nuisance=asdict(nu),
                    seed_lineage=[int(root_seed), i],
                )
            )
    manifest = {
        "version": 1,
        "n_ids": n_ids,
        "per_id": per_id,
        "size": size,
        "root_seed": int(root_seed),
        "records": [asdict(r) for r in records],
    }
    with open(root / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return FaceDataset(root=root, manifest=manifest)


def load_dataset(path: str | os.PathLike) -> FaceDataset:
    root = Path(path)
    with open(root / "manifest.json") as f:
        manifest = json.load(f)
    return FaceDataset(root=root, manifest=manifest)
