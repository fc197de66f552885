"""Dataset handling: annotations, resizing, targets, augmentation, synthesis.

Annotation files are plain text, one record per line:

    id<TAB>path<TAB>x<TAB>y

with (x, y) in original pixel coordinates, UTF-8 encoded, LF line endings.
The synthetic generator renders two straight road-edge lines converging at a
sampled point over a textured background; the annotation is the exact
intersection, so it doubles as a geometric oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .heads import Scale

# coordinates are clamped just inside the image so floor(x / stride) stays valid
EDGE_EPS = 1e-6


@dataclass
class ImageSample:
    image: np.ndarray  # (H, W, 3) uint8
    vp: tuple[float, float]  # (x, y) in this image's pixel coordinates
    id: str = ""

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


@dataclass
class TrainTarget:
    heatmap_q: np.ndarray  # (S/4, S/4) float
    heatmap_h: np.ndarray  # (S/2, S/2) float
    vp_cell: tuple[int, int]  # (row, col) at the regression grid
    offsets: tuple[float, float]  # fractional (x, y) within vp_cell, in [0, 1)
    vp_scaled: tuple[float, float]  # (x, y) at input resolution


def resize_with_annotation(sample: ImageSample, size: int = 320) -> ImageSample:
    """Stretch the image to size x size and scale the annotation per axis."""
    h, w = sample.image.shape[:2]
    if h == 0 or w == 0:
        raise ValueError(f"degenerate image {w}x{h} for sample {sample.id!r}")
    image = cv2.resize(sample.image, (size, size), interpolation=cv2.INTER_LINEAR)
    x = min(max(sample.vp[0] * size / w, 0.0), size - EDGE_EPS)
    y = min(max(sample.vp[1] * size / h, 0.0), size - EDGE_EPS)
    return ImageSample(image=image, vp=(x, y), id=sample.id)


def gaussian_target(
    vp_scaled: tuple[float, float],
    input_size: int,
    scale: Scale,
    std: float = 3.0,
) -> np.ndarray:
    """Unnormalized Gaussian bump centered on the point at the given scale.

    The center is the continuous input-pixel coordinate divided by the scale's
    stride; values are truncated to zero beyond a radius of 3*std cells and the
    cell containing the point is pinned to exactly 1.
    """
    x, y = vp_scaled
    if not (0 <= x < input_size and 0 <= y < input_size):
        raise ValueError(f"point {vp_scaled} outside [0, {input_size})^2")
    stride = scale.stride
    size = input_size // stride
    cx = x / stride
    cy = y / stride
    cols = np.arange(size, dtype=np.float64)
    rows = np.arange(size, dtype=np.float64)
    d2 = (cols[None, :] - cx) ** 2 + (rows[:, None] - cy) ** 2
    heatmap = np.exp(-d2 / (2.0 * std * std))
    heatmap[d2 > (3.0 * std) ** 2] = 0.0
    heatmap[min(int(cy), size - 1), min(int(cx), size - 1)] = 1.0
    return heatmap


def grid_target(vp_scaled: tuple[float, float], cell_size: float = 2.0, grid: int | None = None):
    """Cell index and fractional offsets of a point on the regression grid.

    Returns ((row, col), (offset_x, offset_y)) with offsets in [0, 1).
    """
    x, y = vp_scaled
    if x < 0 or y < 0 or (grid is not None and (x >= grid * cell_size or y >= grid * cell_size)):
        raise ValueError(f"point {vp_scaled} outside the grid")
    col = int(x / cell_size)
    row = int(y / cell_size)
    return (row, col), (x / cell_size - col, y / cell_size - row)


def build_target(
    sample: ImageSample,
    input_size: int,
    regression_scale: Scale = Scale.HALF,
    std: float = 3.0,
) -> TrainTarget:
    """All supervision targets for one sample already at input resolution."""
    vp = sample.vp
    cell_size = float(regression_scale.stride)
    vp_cell, offsets = grid_target(vp, cell_size, grid=input_size // regression_scale.stride)
    return TrainTarget(
        heatmap_q=gaussian_target(vp, input_size, Scale.QUARTER, std),
        heatmap_h=gaussian_target(vp, input_size, Scale.HALF, std),
        vp_cell=vp_cell,
        offsets=offsets,
        vp_scaled=vp,
    )


def augment(
    sample: ImageSample,
    rng: np.random.Generator,
    flip: bool | None = None,
    angle: float | None = None,
    max_angle: float = 10.0,
) -> ImageSample:
    """Random horizontal flip and small rotation, annotation kept consistent.

    flip / angle override the random draws (used by tests); the annotation is
    clamped back inside the image after rotation.
    """
    if flip is None:
        flip = bool(rng.random() < 0.5)
    if angle is None:
        angle = float(rng.uniform(-max_angle, max_angle))

    image = sample.image
    h, w = image.shape[:2]
    x, y = sample.vp
    if flip:
        image = np.ascontiguousarray(image[:, ::-1])
        x = (w - 1) - x
    if angle != 0.0:
        center = ((w - 1) / 2.0, (h - 1) / 2.0)
        matrix = cv2.getRotationMatrix2D(center, angle, 1.0)
        image = cv2.warpAffine(image, matrix, (w, h), flags=cv2.INTER_LINEAR,
                               borderMode=cv2.BORDER_REFLECT_101)
        x, y = matrix @ np.array([x, y, 1.0])
    x = min(max(float(x), 0.0), w - 1.0)
    y = min(max(float(y), 0.0), h - 1.0)
    return ImageSample(image=image, vp=(x, y), id=sample.id)


@dataclass
class RoadScene:
    image: np.ndarray
    vp: tuple[float, float]
    # each line as ((x0, y0), (x1, y1)); both pass exactly through vp
    line_a: tuple[tuple[float, float], tuple[float, float]]
    line_b: tuple[tuple[float, float], tuple[float, float]]


def render_road_scene(rng: np.random.Generator, size: int = 160) -> RoadScene:
    """One synthetic road image: textured background, two edges meeting at the point."""
    # sky/ground gradient plus blurred noise texture
    top = rng.integers(120, 200, size=3)
    bottom = rng.integers(40, 110, size=3)
    ramp = np.linspace(0.0, 1.0, size)[:, None, None]
    image = (top[None, None, :] * (1 - ramp) + bottom[None, None, :] * ramp)
    noise = rng.normal(0.0, 18.0, size=(size, size, 3))
    noise = cv2.blur(noise, (3, 3))
    image = np.clip(image + noise, 0, 255).astype(np.uint8)

    vx = float(rng.uniform(0.2, 0.8) * size)
    vy = float(rng.uniform(0.25, 0.55) * size)

    # road edges run from the bottom border through the vanishing point
    bottom_y = float(size - 1)
    ax = float(rng.uniform(-0.25, 0.3) * size)
    bx = float(rng.uniform(0.7, 1.25) * size)

    def through(p0):
        # extend the segment 15% past the intersection so the lines visibly cross
        t = 1.15
        return (p0[0] + (vx - p0[0]) * t, p0[1] + (vy - p0[1]) * t)

    line_a = ((ax, bottom_y), through((ax, bottom_y)))
    line_b = ((bx, bottom_y), through((bx, bottom_y)))

    # darker road wedge below the edges, bright edge lines on top
    wedge = np.array([[ax, bottom_y], [vx, vy], [bx, bottom_y]], dtype=np.int32)
    shade = image.astype(np.int16)
    mask = np.zeros((size, size), dtype=np.uint8)
    cv2.fillPoly(mask, [wedge], 1)
    shade[mask.astype(bool)] -= 30
    image = np.clip(shade, 0, 255).astype(np.uint8)
    color = tuple(int(c) for c in rng.integers(200, 256, size=3))
    for (p0, p1) in (line_a, line_b):
        cv2.line(image, (int(round(p0[0])), int(round(p0[1]))),
                 (int(round(p1[0])), int(round(p1[1]))), color, thickness=2,
                 lineType=cv2.LINE_AA)

    return RoadScene(image=image, vp=(vx, vy), line_a=line_a, line_b=line_b)


def synth_dataset(n: int, seed: int, size: int = 160) -> list[ImageSample]:
    """n reproducible synthetic samples; sample i depends only on (seed, i)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    samples = []
    for i in range(n):
        scene = render_road_scene(np.random.default_rng([seed, i]), size=size)
        samples.append(ImageSample(image=scene.image, vp=scene.vp, id=f"synth-{seed}-{i:04d}"))
    return samples


def write_annotations(path: Path | str, records: list[tuple[str, str, float, float]]) -> None:
    """Write id/path/x/y records, tab-separated, LF endings, UTF-8."""
    lines = [f"{rid}\t{rpath}\t{x!r}\t{y!r}\n" for rid, rpath, x, y in records]
    Path(path).write_bytes("".join(lines).encode("utf-8"))


def read_annotations(path: Path | str) -> list[tuple[str, str, float, float]]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        rid, rpath, x, y = parts
        records.append((rid, rpath, float(x), float(y)))
    return records


def save_dataset(samples: list[ImageSample], out_dir: Path | str) -> Path:
    """Write samples as PNGs plus an annotations.tsv; returns the annotation path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for sample in samples:
        name = f"{sample.id}.png"
        cv2.imwrite(str(out_dir / name), sample.image)
        records.append((sample.id, name, sample.vp[0], sample.vp[1]))
    ann_path = out_dir / "annotations.tsv"
    write_annotations(ann_path, records)
    return ann_path


def load_dataset(annotations: Path | str) -> list[ImageSample]:
    """Load samples listed in an annotation file; paths resolve next to it."""
    ann_path = Path(annotations)
    root = ann_path.parent
    samples = []
    for rid, rpath, x, y in read_annotations(ann_path):
        image_path = Path(rpath)
        if not image_path.is_absolute():
            image_path = root / image_path
        image = cv2.imread(str(image_path), cv2.IMREAD_COLOR)
        if image is None:
            raise FileNotFoundError(f"cannot read image {image_path}")
        samples.append(ImageSample(image=image, vp=(x, y), id=rid))
    return samples


def to_tensor(image: np.ndarray):
    """(H, W, 3) uint8 -> (3, H, W) float32 in [0, 1]."""
    import torch

    return torch.from_numpy(image.astype(np.float32).transpose(2, 0, 1) / 255.0)
